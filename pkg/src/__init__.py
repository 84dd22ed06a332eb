"""Mixture of linear regressions learner: model, estimators, peeling learner and bench harness."""
