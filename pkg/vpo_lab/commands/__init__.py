"""Commands package for vpo-lab CLI."""
