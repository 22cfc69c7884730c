pub mod analyze_bias;
pub mod evaluate;
pub mod prepare;
pub mod revise;
pub mod synth;
pub mod train;

use agency_core::exec::Execution;
use agency_core::lexicon::AgencyLabel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub src: String,
    pub tgt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub text: String,
    pub target: AgencyLabel,
}

#[derive(Debug, Clone, Copy, clap::Args)]
pub struct ExecArgs {
    /// Run single-threaded. Outputs are identical either way.
    #[arg(long)]
    pub sequential: bool,
}

impl ExecArgs {
    pub fn execution(self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}
