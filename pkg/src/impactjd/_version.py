"""Version information for impactjd package."""

# Bump this single line when releasing.
__version__ = "0.1.0"
