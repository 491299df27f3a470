//! Library surface of the `mvae` command-line tool: run configuration and
//! the pipeline commands, exposed for integration tests.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_embed, cmd_eval, cmd_features, cmd_generate, cmd_hierarchy, cmd_interpolate, cmd_synth,
    cmd_train, decode_to_mesh, embed_means, open_session, rms_pair, CommandError, DecoderSession,
    EmbeddingResult,
};
pub use config::{load_config, ConfigError, RunConfig};
