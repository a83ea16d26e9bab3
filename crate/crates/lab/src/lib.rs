//! File formats, plots and the `dmsol` command-line front end.

pub mod cli;
pub mod io;
pub mod json;
pub mod svg;
