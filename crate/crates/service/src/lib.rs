//! HTTP session service and batch command line over `rtr-core`.

pub mod api;
pub mod cli;
