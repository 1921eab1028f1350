use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use frontalize_tensor::{Adam, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use super::config::{lr_at_epoch, TrainConfig};
use super::data::TrainData;
use super::step::{train_step, Models, Optimizers, StepTrace};
use crate::networks::{Checkpoint, Generator, Network};
use crate::{Error, Result};

pub const LATEST: &str = "LATEST";
pub const TRACE: &str = "trace.jsonl";

/// Run state stored in the checkpoint header next to the tensors.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RunState {
    train: TrainConfig,
    /// Batches of the current epoch already consumed.
    batch_in_epoch: usize,
    adam_steps: [u64; 3],
    extractor: String,
}

/// Models, optimizer state and schedule position of a training run.
pub struct Trainer {
    pub config: TrainConfig,
    pub models: Models,
    pub optimizers: Optimizers,
    /// Generator steps taken so far.
    pub step: u64,
    pub epoch: u64,
    pub batch_in_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub steps_run: u64,
    pub total_steps: u64,
    pub epochs_completed: u64,
    pub checkpoints: Vec<PathBuf>,
    pub trace: PathBuf,
    pub resumed_from: Option<PathBuf>,
}

const NETS: [&str; 3] = ["g", "d1", "d2"];

fn push_adam(ck: &mut Checkpoint, prefix: &str, params: &ParamSet, adam: &Adam) {
    for ((name, m), v) in params
        .names()
        .iter()
        .zip(adam.first_moments())
        .zip(adam.second_moments())
    {
        ck.push(format!("adam/{prefix}/m/{name}"), m.clone());
        ck.push(format!("adam/{prefix}/v/{name}"), v.clone());
    }
}

fn read_adam(
    ck: &Checkpoint,
    prefix: &str,
    params: &ParamSet,
    steps: u64,
    config: &TrainConfig,
) -> Result<Adam> {
    let read = |kind: &str| -> Result<Vec<Tensor>> {
        params
            .names()
            .iter()
            .map(|n| ck.get(&format!("adam/{prefix}/{kind}/{n}")).cloned())
            .collect()
    };
    Ok(Adam::from_state(
        config.beta1,
        config.beta2,
        config.adam_eps,
        steps,
        read("m")?,
        read("v")?,
    ))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let models = Models::init(&config)?;
        let optimizers = Optimizers::new(&models, &config);
        Ok(Self {
            config,
            models,
            optimizers,
            step: 0,
            epoch: 0,
            batch_in_epoch: 0,
        })
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let state = RunState {
            train: self.config.clone(),
            batch_in_epoch: self.batch_in_epoch,
            adam_steps: [
                self.optimizers.generator.steps(),
                self.optimizers.global_d.steps(),
                self.optimizers.local_d.steps(),
            ],
            extractor: crate::networks::IdentityExtractor::id(&self.models.extractor),
        };
        let json = serde_json::to_value(&state).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut ck = Checkpoint::new(
            self.models.arch_id(),
            self.config.seed,
            self.step,
            self.epoch,
            json,
        );
        let m = &self.models;
        ck.push_set(NETS[0], m.generator.params());
        ck.push_set(NETS[1], m.global_d.params());
        ck.push_set(NETS[2], m.local_d.params());
        push_adam(
            &mut ck,
            NETS[0],
            m.generator.params(),
            &self.optimizers.generator,
        );
        push_adam(
            &mut ck,
            NETS[1],
            m.global_d.params(),
            &self.optimizers.global_d,
        );
        push_adam(
            &mut ck,
            NETS[2],
            m.local_d.params(),
            &self.optimizers.local_d,
        );
        Ok(ck)
    }

    /// Restores a run. The architecture recorded in the checkpoint must match
    /// the one `config` describes.
    pub fn from_checkpoint(config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let mut t = Self::new(config)?;
        let expected = t.models.arch_id();
        if ck.header.arch != expected {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint has {}, configuration builds {expected}",
                ck.header.arch
            )));
        }
        let state: RunState = serde_json::from_value(ck.header.config.clone())
            .map_err(|e| Error::Checkpoint(format!("bad run state: {e}")))?;
        let m = &mut t.models;
        let g = ck.param_set(NETS[0], m.generator.params())?;
        let d1 = ck.param_set(NETS[1], m.global_d.params())?;
        let d2 = ck.param_set(NETS[2], m.local_d.params())?;
        t.optimizers.generator = read_adam(ck, NETS[0], &g, state.adam_steps[0], &t.config)?;
        t.optimizers.global_d = read_adam(ck, NETS[1], &d1, state.adam_steps[1], &t.config)?;
        t.optimizers.local_d = read_adam(ck, NETS[2], &d2, state.adam_steps[2], &t.config)?;
        m.generator.load_params(g)?;
        m.global_d.load_params(d1)?;
        m.local_d.load_params(d2)?;
        t.step = ck.header.step;
        t.epoch = ck.header.epochs_completed;
        t.batch_in_epoch = state.batch_in_epoch;
        Ok(t)
    }

    fn save(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        self.to_checkpoint()?.save(&path)?;
        let latest = dir.join(LATEST);
        fs::write(&latest, format!("{name}\n")).map_err(|e| Error::io(&latest, e))?;
        Ok(path)
    }

    fn done(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.step >= m)
    }

    /// Trains until `config.epochs` epochs or `config.max_steps` steps,
    /// checkpointing after every epoch and appending one trace line per step.
    pub fn fit(&mut self, data: &TrainData, dir: &Path) -> Result<FitReport> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let trace_path = dir.join(TRACE);
        truncate_trace(&trace_path, self.step)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&trace_path)
            .map_err(|e| Error::io(&trace_path, e))?;
        let mut trace = BufWriter::new(file);
        let start_step = self.step;
        let mut checkpoints = Vec::new();
        let bs = self.config.batch_size;

        while self.epoch < self.config.epochs && !self.done() {
            let order = data.epoch_order(self.config.seed, self.epoch, bs);
            let lr = lr_at_epoch(&self.config, self.epoch);
            while self.batch_in_epoch < order.len() && !self.done() {
                let batch = data.batch(&order[self.batch_in_epoch])?;
                let t = train_step(
                    &mut self.models,
                    &mut self.optimizers,
                    &batch,
                    &self.config,
                    lr,
                    self.step + 1,
                    self.epoch,
                )?;
                self.step += 1;
                self.batch_in_epoch += 1;
                let line = serde_json::to_string(&t).expect("trace serializes");
                writeln!(trace, "{line}").map_err(|e| Error::io(&trace_path, e))?;
                trace.flush().map_err(|e| Error::io(&trace_path, e))?;
            }
            if self.batch_in_epoch == order.len() {
                self.epoch += 1;
                self.batch_in_epoch = 0;
                checkpoints.push(self.save(dir, &format!("epoch-{:04}.ckpt", self.epoch))?);
            }
        }
        if self.batch_in_epoch > 0 {
            checkpoints.push(self.save(dir, &format!("step-{:08}.ckpt", self.step))?);
        }
        Ok(FitReport {
            steps_run: self.step - start_step,
            total_steps: self.step,
            epochs_completed: self.epoch,
            checkpoints,
            trace: trace_path,
            resumed_from: None,
        })
    }
}

/// Drops trace lines past `step`, so a resumed run does not log a step twice.
fn truncate_trace(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<String> = if step == 0 {
        Vec::new()
    } else {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut kept = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let t: StepTrace = serde_json::from_str(&line).map_err(|e| {
                Error::Trainer(format!("{}: unreadable trace line: {e}", path.display()))
            })?;
            if t.step <= step {
                kept.push(line);
            }
        }
        kept
    };
    let mut body = kept.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Checkpoint named by `dir/LATEST`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let latest = dir.join(LATEST);
    if !latest.exists() {
        return Ok(None);
    }
    let name = fs::read_to_string(&latest).map_err(|e| Error::io(&latest, e))?;
    Ok(Some(dir.join(name.trim())))
}

/// Trains from scratch, or resumes from `dir/LATEST` when present.
pub fn fit(config: TrainConfig, data: &TrainData, dir: &Path) -> Result<(Trainer, FitReport)> {
    let (mut trainer, resumed_from) = match latest_checkpoint(dir)? {
        Some(path) => {
            let ck = Checkpoint::load(&path)?;
            (Trainer::from_checkpoint(config, &ck)?, Some(path))
        }
        None => (Trainer::new(config)?, None),
    };
    let mut report = trainer.fit(data, dir)?;
    report.resumed_from = resumed_from;
    Ok((trainer, report))
}

/// Reads every trace line.
pub fn read_trace(path: &Path) -> Result<Vec<StepTrace>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line)
                .map_err(|e| Error::Trainer(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Generator and training configuration stored in a checkpoint.
pub fn load_generator(path: &Path) -> Result<(Generator, TrainConfig)> {
    let ck = Checkpoint::load(path)?;
    let state: RunState = serde_json::from_value(ck.header.config.clone())
        .map_err(|e| Error::Checkpoint(format!("{}: bad run state: {e}", path.display())))?;
    let mut generator = Generator::new(state.train.generator_config(), state.train.seed)?;
    let params = ck.param_set(NETS[0], generator.params())?;
    generator.load_params(params)?;
    Ok((generator, state.train))
}
