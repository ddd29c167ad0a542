//! Experiment drivers, file formats, and verification reports around
//! `dropgnn-core`: everything that touches the filesystem or the terminal.

pub mod experiment;
pub mod formats;
pub mod svg;
pub mod sweeps;
pub mod verify;

/// Default output directory: `DROPGNN_OUT_DIR` or `./out`.
pub fn default_out_dir() -> std::path::PathBuf {
    std::env::var_os("DROPGNN_OUT_DIR")
        .map(Into::into)
        .unwrap_or_else(|| "out".into())
}
