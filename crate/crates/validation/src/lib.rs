//! Acceptance checks for `likert-latent` live in `tests/acceptance.rs`.
