//! Pricing policies.
