"""Package containing command handlers."""
