//! Task generators behind one interface, plus a draw-counting curriculum.

pub mod ngram;
pub mod repeat_copy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Head, NetSpec};

pub use ngram::{NGramModel, NGramSuite, NGramSuiteSpec};
pub use repeat_copy::{RepeatCopy, RepeatCopySpec};

/// Independent sample streams. Batches from different streams never
/// coincide by construction of their seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    /// Batches the optimiser trains on.
    Train,
    /// Evaluation-only second samples x′ used by gains.
    Extra,
    /// Held-out batches for loss reports.
    Eval,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Train, Stream::Extra, Stream::Eval];

    pub fn tag(self) -> u64 {
        match self {
            Stream::Train => 1,
            Stream::Extra => 2,
            Stream::Eval => 3,
        }
    }

    fn slot(self) -> usize {
        self.tag() as usize - 1
    }
}

/// Fully determines a batch together with the suite seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DrawKey {
    pub stream: Stream,
    pub task: usize,
    pub index: u64,
}

pub trait TaskSuite: Send + Sync {
    fn num_tasks(&self) -> usize;
    fn task_name(&self, task: usize) -> String;
    fn input_size(&self) -> usize;
    fn output_size(&self) -> usize;
    fn head(&self) -> Head;
    /// Deterministic in `(key, batch_size, seed)`.
    fn sample(&self, key: DrawKey, batch_size: usize, seed: u64) -> Result<Batch>;

    fn net_spec(&self, hidden_sizes: Vec<usize>) -> NetSpec {
        NetSpec::new(self.input_size(), hidden_sizes, self.output_size(), self.head())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurriculumSpec {
    RepeatCopy(RepeatCopySpec),
    Ngram(NGramSuiteSpec),
}

impl Default for CurriculumSpec {
    fn default() -> Self {
        CurriculumSpec::RepeatCopy(RepeatCopySpec::default())
    }
}

impl CurriculumSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CurriculumSpec::RepeatCopy(s) => s.validate(),
            CurriculumSpec::Ngram(s) => s.validate(),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn TaskSuite>> {
        Ok(match self {
            CurriculumSpec::RepeatCopy(s) => Box::new(RepeatCopy::new(s.clone())?),
            CurriculumSpec::Ngram(s) => Box::new(NGramSuite::build(s.clone(), seed)?),
        })
    }
}

/// Tasks D_1..D_N with the target D_N last, a batch size, and per-stream,
/// per-task draw counters.
pub struct Curriculum {
    suite: Box<dyn TaskSuite>,
    batch_size: usize,
    seed: u64,
    counts: Vec<[u64; 3]>,
}

impl std::fmt::Debug for Curriculum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Curriculum")
            .field("num_tasks", &self.num_tasks())
            .field("batch_size", &self.batch_size)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Curriculum {
    pub fn new(suite: Box<dyn TaskSuite>, batch_size: usize, seed: u64) -> Result<Self> {
        if suite.num_tasks() == 0 {
            return Err(Error::Config("curriculum needs at least one task".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let counts = vec![[0; 3]; suite.num_tasks()];
        Ok(Self {
            suite,
            batch_size,
            seed,
            counts,
        })
    }

    pub fn suite(&self) -> &dyn TaskSuite {
        self.suite.as_ref()
    }

    pub fn num_tasks(&self) -> usize {
        self.suite.num_tasks()
    }

    /// Zero-based index of D_N.
    pub fn target(&self) -> usize {
        self.num_tasks() - 1
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Next batch from `stream` for `task`; advances that counter.
    pub fn draw(&mut self, stream: Stream, task: usize) -> Result<Batch> {
        let index = self.count(stream, task)?;
        let batch = self.peek(DrawKey { stream, task, index })?;
        self.counts[task][stream.slot()] += 1;
        Ok(batch)
    }

    /// The batch for an explicit key; touches no counter.
    pub fn peek(&self, key: DrawKey) -> Result<Batch> {
        self.check_task(key.task)?;
        let batch = self.suite.sample(key, self.batch_size, self.seed)?;
        debug_assert_eq!(batch.task_id, key.task);
        Ok(batch)
    }

    pub fn count(&self, stream: Stream, task: usize) -> Result<u64> {
        self.check_task(task)?;
        Ok(self.counts[task][stream.slot()])
    }

    /// Counters as `[train, extra, eval]` per task.
    pub fn counts(&self) -> &[[u64; 3]] {
        &self.counts
    }

    pub fn set_counts(&mut self, counts: Vec<[u64; 3]>) -> Result<()> {
        if counts.len() != self.num_tasks() {
            return Err(Error::Shape(format!(
                "{} draw counters for {} tasks",
                counts.len(),
                self.num_tasks()
            )));
        }
        self.counts = counts;
        Ok(())
    }

    fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.num_tasks() {
            return Err(Error::TaskOutOfRange {
                task: format!("{task} (curriculum has {})", self.num_tasks()),
            });
        }
        Ok(())
    }
}
