"""Package containing core logic."""
