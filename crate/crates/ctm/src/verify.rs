//! Verification harness for the proportional-share law.
//!
//! For an additive competition function, a leaf's chance of winning
//! the whole tree equals its share of the total score, whatever the
//! arrangement of leaves. This module checks that three ways:
//!
//! 1. exactly, by comparing the rational tree DP against the
//!    closed-form share;
//! 2. statistically, by seeded Monte Carlo over single competitions,
//!    scored against a four-sigma binomial budget;
//! 3. structurally, by recomputing the DP under random leaf
//!    permutations.
//!
//! The DP works for non-additive functions too (every local score
//! depends only on subtree intensity and mood sums), so the same
//! harness demonstrates where the share law breaks.

use std::error::Error;
use std::fmt;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::chunk::Address;
use crate::competition::CompetitionError;
use crate::ltm::{BehaviorRegistry, LtmError, ProcessorState, TickInputs};
use crate::machine::{MachineConfig, MachineError};
use crate::rng::RngStream;
use crate::uptree::{CompetitionMode, ShapePolicy, UpTreeError};
use crate::{Chunk, ExactChunk, ExactCompetitionFunction, ExactUpTree, UpTree};

const MC_SALT: u64 = 0x7472_6961_6c73_0001;
const PERM_SALT: u64 = 0x7065_726d_7574_0002;

#[derive(Debug)]
pub enum VerifyError {
    /// Win-rate estimation needs the probabilistic competition.
    DeterministicMode,
    /// The share law only holds for additive functions; pass
    /// `allow_nonadditive` to study the breakage anyway.
    NonAdditive,
    NoTrials,
    /// Every leaf scored zero, so shares are undefined.
    ZeroTotalScore,
    NonFiniteLeaf { address: Address },
    NonFiniteFunction,
    Machine(MachineError),
    UpTree(UpTreeError),
    Competition(CompetitionError),
}

impl fmt::Display for VerifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyError::DeterministicMode => {
                write!(f, "win rates are degenerate in deterministic mode")
            }
            VerifyError::NonAdditive => write!(
                f,
                "the competition function is not additive, so the share law \
                 does not apply; pass allow_nonadditive to proceed"
            ),
            VerifyError::NoTrials => write!(f, "at least one trial is required"),
            VerifyError::ZeroTotalScore => {
                write!(f, "all leaves score zero; shares are undefined")
            }
            VerifyError::NonFiniteLeaf { address } => {
                write!(f, "leaf of {address} has non-finite fields")
            }
            VerifyError::NonFiniteFunction => {
                write!(f, "competition function has a non-finite coefficient")
            }
            VerifyError::Machine(e) => write!(f, "{e}"),
            VerifyError::UpTree(e) => write!(f, "{e}"),
            VerifyError::Competition(e) => write!(f, "{e}"),
        }
    }
}

// Wrapped errors pass straight through Display, so no `source` chain.
impl Error for VerifyError {}

impl From<MachineError> for VerifyError {
    fn from(e: MachineError) -> Self {
        VerifyError::Machine(e)
    }
}

impl From<LtmError> for VerifyError {
    fn from(e: LtmError) -> Self {
        VerifyError::Machine(MachineError::Ltm(e))
    }
}

impl From<UpTreeError> for VerifyError {
    fn from(e: UpTreeError) -> Self {
        VerifyError::UpTree(e)
    }
}

impl From<CompetitionError> for VerifyError {
    fn from(e: CompetitionError) -> Self {
        VerifyError::Competition(e)
    }
}

/// What each processor would submit on its first tick, before any
/// broadcast or mood exists: the static instance the share law talks
/// about.
pub fn static_leaf_chunks(
    config: &MachineConfig,
    registry: &BehaviorRegistry,
) -> Result<Vec<Chunk>, VerifyError> {
    config.validate()?;
    let mut decls = config.processors.clone();
    decls.sort_by_key(|d| d.address);
    let mut leaves = Vec::with_capacity(decls.len());
    for d in &decls {
        let behavior = registry.instantiate(&d.kind, &d.params)?;
        let mut p = ProcessorState::new(d.address, behavior, d.intensity_power)?;
        p.set_competes(d.competes);
        p.receive(
            &TickInputs {
                t: 1,
                broadcast: None,
                link_chunks: &[],
                sensor_chunks: &[],
                current_mood: 0.0,
                current_intensity: 0.0,
            },
            config.interrupt_threshold,
        );
        leaves.push(
            p.submit(1, 0.0, config.mood_delta, config.gist_size_limit_bits)
                .chunk,
        );
    }
    Ok(leaves)
}

fn exact_leaves(leaves: &[Chunk]) -> Result<Vec<ExactChunk>, VerifyError> {
    leaves
        .iter()
        .map(|c| {
            c.to_exact().ok_or(VerifyError::NonFiniteLeaf {
                address: c.address(),
            })
        })
        .collect()
}

/// Closed-form shares: f(leaf) / sum of f over all leaves.
pub fn exact_shares(
    f: &ExactCompetitionFunction,
    leaves: &[ExactChunk],
) -> Result<Vec<BigRational>, VerifyError> {
    let scores = leaves
        .iter()
        .map(|c| f.eval(c))
        .collect::<Result<Vec<_>, _>>()?;
    let total: BigRational = scores.iter().cloned().sum();
    if total.is_zero() {
        return Err(VerifyError::ZeroTotalScore);
    }
    Ok(scores.into_iter().map(|s| s / &total).collect())
}

/// One row of a win-rate report, in address order.
#[derive(Clone, Debug)]
pub struct LeafShare {
    pub address: Address,
    /// f64 image of the leaf's exact score.
    pub f_value: f64,
    /// Predicted win probability (exact), and its f64 image.
    pub share_exact: BigRational,
    pub share: f64,
    pub empirical: f64,
    pub deviation: f64,
    /// Four binomial standard deviations at this share and trial count.
    pub four_sigma: f64,
    pub within: bool,
}

#[derive(Clone, Debug)]
pub struct WinRateReport {
    pub trials: u64,
    pub leaves: Vec<LeafShare>,
    pub max_deviation: f64,
    pub all_within: bool,
    /// Pearson statistic over leaves with positive share.
    pub chi_square: f64,
    /// For additive functions: whether the tree DP reproduced the
    /// closed-form share exactly. Absent when non-additive.
    pub theorem_exact: Option<bool>,
}

impl WinRateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("leaf,f_value,share,empirical,deviation\n");
        for l in &self.leaves {
            writeln!(
                out,
                "{},{},{},{},{}",
                l.address, l.f_value, l.share, l.empirical, l.deviation
            )
            .expect("string write");
        }
        out
    }
}

/// Exact win probabilities as numerator/denominator rows.
pub fn oracle_csv(leaves: &[LeafShare]) -> String {
    let mut out = String::from("leaf,f_value,numerator,denominator\n");
    for l in leaves {
        writeln!(
            out,
            "{},{},{},{}",
            l.address,
            l.f_value,
            l.share_exact.numer(),
            l.share_exact.denom()
        )
        .expect("string write");
    }
    out
}

/// Verifies the share law on one machine's static instance: exact DP
/// against closed form, then seeded Monte Carlo against the exact
/// probabilities.
pub fn verify_theorem(
    config: &MachineConfig,
    registry: &BehaviorRegistry,
    trials: u64,
    allow_nonadditive: bool,
) -> Result<WinRateReport, VerifyError> {
    if config.mode != CompetitionMode::Probabilistic {
        return Err(VerifyError::DeterministicMode);
    }
    if !config.function.is_additive() && !allow_nonadditive {
        return Err(VerifyError::NonAdditive);
    }
    if trials == 0 {
        return Err(VerifyError::NoTrials);
    }
    let leaves = static_leaf_chunks(config, registry)?;
    let n = leaves.len();
    let exact = exact_leaves(&leaves)?;
    let f_exact = config
        .function
        .to_exact()
        .ok_or(VerifyError::NonFiniteFunction)?;

    let mut oracle_tree = ExactUpTree::build(n, ShapePolicy::Balanced)?;
    if let Some(a) = &config.leaf_assignment {
        oracle_tree = oracle_tree.with_assignment(a)?;
    }
    let dp = oracle_tree.exact_win_probabilities(&f_exact, &exact)?;

    let (shares, theorem_exact) = if config.function.is_additive() {
        let shares = exact_shares(&f_exact, &exact)?;
        let agrees = shares == dp;
        (shares, Some(agrees))
    } else {
        (dp, None)
    };

    let mut sim_tree = UpTree::build(n, ShapePolicy::Balanced)?;
    if let Some(a) = &config.leaf_assignment {
        sim_tree = sim_tree.with_assignment(a)?;
    }
    let base = RngStream::from_seed(config.seed ^ MC_SALT);
    let mut counts = vec![0u64; n];
    for trial in 0..trials {
        let mut rng = base.substream(trial);
        let winner = sim_tree.single_competition(
            &leaves,
            CompetitionMode::Probabilistic,
            &config.function,
            &mut rng,
        )?;
        counts[winner.address().index()] += 1;
    }

    let mut rows = Vec::with_capacity(n);
    let mut max_deviation = 0.0f64;
    let mut all_within = true;
    let mut chi_square = 0.0f64;
    for (i, share_exact) in shares.iter().enumerate() {
        let share = share_exact.to_f64().expect("share fits in f64");
        let f_value = f_exact.eval(&exact[i])?.to_f64().expect("score fits");
        let empirical = counts[i] as f64 / trials as f64;
        let deviation = (empirical - share).abs();
        let four_sigma = 4.0 * (share * (1.0 - share) / trials as f64).sqrt();
        let within = deviation <= four_sigma;
        all_within &= within;
        max_deviation = max_deviation.max(deviation);
        if share > 0.0 {
            let expected = share * trials as f64;
            let diff = counts[i] as f64 - expected;
            chi_square += diff * diff / expected;
        }
        rows.push(LeafShare {
            address: exact[i].address(),
            f_value,
            share_exact: share_exact.clone(),
            share,
            empirical,
            deviation,
            four_sigma,
            within,
        });
    }
    Ok(WinRateReport {
        trials,
        leaves: rows,
        max_deviation,
        all_within,
        chi_square,
        theorem_exact,
    })
}

#[derive(Clone, Debug)]
pub struct PermutationReport {
    pub permutations: u32,
    /// Whether every permuted arrangement reproduced the base
    /// win probabilities exactly.
    pub all_equal: bool,
    /// Largest absolute probability change seen, as f64.
    pub max_divergence: f64,
}

/// Recomputes the exact win probabilities under seeded random leaf
/// permutations. Additive functions must report `all_equal`;
/// non-additive ones generally will not.
pub fn permutation_invariance(
    config: &MachineConfig,
    registry: &BehaviorRegistry,
    permutations: u32,
) -> Result<PermutationReport, VerifyError> {
    let leaves = static_leaf_chunks(config, registry)?;
    let n = leaves.len();
    let exact = exact_leaves(&leaves)?;
    let f_exact = config
        .function
        .to_exact()
        .ok_or(VerifyError::NonFiniteFunction)?;

    let mut base_tree = ExactUpTree::build(n, ShapePolicy::Balanced)?;
    if let Some(a) = &config.leaf_assignment {
        base_tree = base_tree.with_assignment(a)?;
    }
    let base = base_tree.exact_win_probabilities(&f_exact, &exact)?;

    let mut stream = RngStream::from_seed(config.seed ^ PERM_SALT);
    let mut all_equal = true;
    let mut max_divergence = 0.0f64;
    for _ in 0..permutations {
        let mut perm: Vec<usize> = (0..n).collect();
        stream.shuffle(&mut perm);
        let tree = ExactUpTree::build(n, ShapePolicy::Balanced)?.with_assignment(&perm)?;
        let probs = tree.exact_win_probabilities(&f_exact, &exact)?;
        for (p, b) in probs.iter().zip(&base) {
            if p != b {
                all_equal = false;
                let d = (p - b).to_f64().map(f64::abs).unwrap_or(f64::INFINITY);
                max_divergence = max_divergence.max(d);
            }
        }
    }
    Ok(PermutationReport {
        permutations,
        all_equal,
        max_divergence,
    })
}
