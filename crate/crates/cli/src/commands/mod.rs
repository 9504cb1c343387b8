pub mod evaluate;
pub mod generate;
pub mod graph;
pub mod pipeline;
pub mod preprocess;
pub mod repair;
pub mod validate;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{bail, Context};
use modigen_core::simbackend::{micro_backend, mock_backend, omc_adapter, BackendSession};

use crate::{BackendArg, BackendOpts};

/// A factory producing fresh sessions of the selected backend. External
/// compiler sessions each get their own working subdirectory.
pub struct BackendSetup {
    opts: BackendOpts,
    workdir: Option<tempfile::TempDir>,
    session_counter: AtomicUsize,
}

impl BackendSetup {
    pub fn new(opts: &BackendOpts) -> anyhow::Result<Self> {
        match opts.backend {
            BackendArg::Mock => {
                let Some(fixture) = &opts.fixture else {
                    bail!("--backend mock requires --fixture FILE");
                };
                // Validate the fixture once up front.
                mock_backend(fixture).with_context(|| fixture.display().to_string())?;
                Ok(BackendSetup {
                    opts: opts.clone(),
                    workdir: None,
                    session_counter: AtomicUsize::new(0),
                })
            }
            BackendArg::Micro => Ok(BackendSetup {
                opts: opts.clone(),
                workdir: None,
                session_counter: AtomicUsize::new(0),
            }),
            BackendArg::Omc => {
                let workdir =
                    tempfile::tempdir().context("cannot create compiler working directory")?;
                Ok(BackendSetup {
                    opts: opts.clone(),
                    workdir: Some(workdir),
                    session_counter: AtomicUsize::new(0),
                })
            }
        }
    }

    pub fn factory(&self) -> impl Fn() -> Result<Box<dyn BackendSession>, String> + Sync + '_ {
        move || match self.opts.backend {
            BackendArg::Micro => Ok(Box::new(micro_backend()) as Box<dyn BackendSession>),
            BackendArg::Mock => {
                let fixture = self.opts.fixture.as_ref().expect("checked in new");
                mock_backend(fixture)
                    .map(|s| Box::new(s) as Box<dyn BackendSession>)
                    .map_err(|e| e.to_string())
            }
            BackendArg::Omc => {
                let exe = self
                    .opts
                    .omc_path
                    .clone()
                    .unwrap_or_else(|| std::path::PathBuf::from("omc"));
                let index = self.session_counter.fetch_add(1, Ordering::SeqCst);
                let workdir = self
                    .workdir
                    .as_ref()
                    .expect("omc setup keeps a workdir")
                    .path()
                    .join(format!("session_{index}"));
                omc_adapter(&exe, &workdir)
                    .map(|s| Box::new(s) as Box<dyn BackendSession>)
                    .map_err(|e| e.to_string())
            }
        }
    }

}

/// Read bench tasks keyed by id, rejecting duplicate ids.
pub fn read_bench(path: &Path) -> anyhow::Result<Vec<modigen_core::genclient::BenchTask>> {
    let tasks: Vec<modigen_core::genclient::BenchTask> =
        modigen_core::jsonl::read_jsonl(path).with_context(|| path.display().to_string())?;
    let mut seen = std::collections::HashSet::new();
    for task in &tasks {
        if !seen.insert(task.id.clone()) {
            bail!("duplicate task id '{}' in {}", task.id, path.display());
        }
    }
    Ok(tasks)
}
