"""Root test package for the mixture regression learner."""
