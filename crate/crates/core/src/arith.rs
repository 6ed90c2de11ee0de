//! Synthetic multi-digit addition benchmark with correct and corrupted
//! presented answers.
//!
//! Corrupted answers add a uniformly drawn positive offset whose range sets
//! the difficulty: easy `[1000, 10000]`, medium `[100, 1000]`, hard `[1, 10]`
//! (bounds inclusive).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIGITS: u32 = 13;
/// Two 38-digit operands plus the largest offset still fit in `u128`.
pub const MAX_DIGITS: u32 = 38;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    None,
}

impl Difficulty {
    /// Inclusive offset range, or `None` for uncorrupted answers.
    pub fn offset_range(self) -> Option<(u64, u64)> {
        match self {
            Self::Easy => Some((1000, 10000)),
            Self::Medium => Some((100, 1000)),
            Self::Hard => Some((1, 10)),
            Self::None => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Self::Easy => "easy",
            Self::Medium => "medium",
            Self::Hard => "hard",
            Self::None => "none",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Self::Easy),
            "medium" => Ok(Self::Medium),
            "hard" => Ok(Self::Hard),
            "none" => Ok(Self::None),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArithProblem {
    pub operand_a: u128,
    pub operand_b: u128,
    pub correct_answer: u128,
    pub presented_answer: u128,
    pub is_corrupted: bool,
    pub difficulty: Difficulty,
    pub offset: u64,
    /// Question followed by the presented answer.
    pub prompt_text: String,
    /// `seed/draw` of the RNG stream that produced the operands.
    pub seed_path: String,
}

impl ArithProblem {
    pub fn question(&self) -> String {
        question_text(self.operand_a, self.operand_b)
    }
}

pub fn question_text(a: u128, b: u128) -> String {
    format!("Compute: {a} + {b} = ")
}

/// Seeded generator. One stream per seed; draws are sequential.
pub struct ArithGenerator {
    rng: ChaCha8Rng,
    seed: u64,
    draws: u64,
    digits: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum ArithError {
    #[error("digit count must be in 1..={MAX_DIGITS}, got {0}")]
    BadDigits(u32),
    #[error("n_per_class must be at least 1")]
    EmptyDataset,
    #[error("problem is already corrupted")]
    AlreadyCorrupted,
    #[error("cannot corrupt with difficulty `none`")]
    NoOffsetRange,
}

impl ArithGenerator {
    pub fn new(seed: u64, digits: u32) -> Result<Self, ArithError> {
        if !(1..=MAX_DIGITS).contains(&digits) {
            return Err(ArithError::BadDigits(digits));
        }
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(seed), seed, draws: 0, digits })
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    /// Uncorrupted problem with operands uniform over `[10^(d-1), 10^d - 1]`.
    pub fn gen_problem(&mut self) -> ArithProblem {
        let lo = 10u128.pow(self.digits - 1);
        let hi = 10u128.pow(self.digits) - 1;
        let a = self.rng.gen_range(lo..=hi);
        let b = self.rng.gen_range(lo..=hi);
        let seed_path = format!("{}/{}", self.seed, self.draws);
        self.draws += 1;
        let sum = a + b;
        ArithProblem {
            operand_a: a,
            operand_b: b,
            correct_answer: sum,
            presented_answer: sum,
            is_corrupted: false,
            difficulty: Difficulty::None,
            offset: 0,
            prompt_text: format!("{}{sum}", question_text(a, b)),
            seed_path,
        }
    }

    pub fn corrupt_answer(&mut self, problem: &ArithProblem, difficulty: Difficulty) -> Result<ArithProblem, ArithError> {
        if problem.is_corrupted {
            return Err(ArithError::AlreadyCorrupted);
        }
        let (lo, hi) = difficulty.offset_range().ok_or(ArithError::NoOffsetRange)?;
        let offset = self.rng.gen_range(lo..=hi);
        let presented = problem.correct_answer + u128::from(offset);
        Ok(ArithProblem {
            presented_answer: presented,
            is_corrupted: true,
            difficulty,
            offset,
            prompt_text: format!("{}{presented}", problem.question()),
            ..problem.clone()
        })
    }
}

/// One line of the dataset file. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    /// Decimal string; values can exceed the exact range of JSON doubles.
    pub presented_answer: String,
    pub label: String,
    pub difficulty: Difficulty,
    pub offset: u64,
}

impl DatasetRecord {
    pub fn is_correct(&self) -> bool {
        self.label == "correct"
    }
}

/// `n_per_class` correct and `n_per_class` corrupted problems, shuffled by
/// the seed. Ids are assigned after shuffling.
pub fn gen_dataset(
    n_per_class: usize,
    difficulty: Difficulty,
    seed: u64,
    digits: u32,
) -> Result<Vec<DatasetRecord>, ArithError> {
    if n_per_class == 0 {
        return Err(ArithError::EmptyDataset);
    }
    if difficulty.offset_range().is_none() {
        return Err(ArithError::NoOffsetRange);
    }
    let mut gen = ArithGenerator::new(seed, digits)?;
    let mut problems = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        problems.push(gen.gen_problem());
    }
    for _ in 0..n_per_class {
        let p = gen.gen_problem();
        problems.push(gen.corrupt_answer(&p, difficulty)?);
    }
    problems.shuffle(&mut gen.rng);
    Ok(problems
        .into_iter()
        .enumerate()
        .map(|(i, p)| DatasetRecord {
            id: format!("arith-{}-{i:06}", difficulty.code()),
            question: p.question(),
            presented_answer: p.presented_answer.to_string(),
            label: if p.is_corrupted { "incorrect" } else { "correct" }.into(),
            difficulty: p.difficulty,
            offset: p.offset,
        })
        .collect())
}

pub fn write_dataset<W: Write>(records: &[DatasetRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Malformed { line: n + 1, message: e.to_string() })?;
        if rec.label != "correct" && rec.label != "incorrect" {
            return Err(DatasetError::Malformed { line: n + 1, message: format!("bad label `{}`", rec.label) });
        }
        out.push(rec);
    }
    Ok(out)
}
