"""Package containing managers for business logic."""
