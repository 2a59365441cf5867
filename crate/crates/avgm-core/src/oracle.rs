//! Exact analytic and brute-force machinery: the monotonic failure
//! condition, converged context-blind values, the equal-share reward
//! decomposition and its argmax-consistency verifier.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::PayoffTensor;
use crate::rng::Rng;
use crate::{CoreError, Result};

/// Parameters of the two-action lifting payoff analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffSpec {
    /// Cooperation reward R > 0.
    pub r: f64,
    /// Penalty magnitude P >= 0.
    pub p: f64,
    /// Probability of the lazy action, in [0, 1).
    pub p_lazy: f64,
}

/// Whether a context-blind utility fails to represent the optimal policy:
/// true iff R/P < (2 p_l - 1) / (1 - p_l). Never fails for P = 0.
pub fn fails_monotonic(spec: PayoffSpec) -> Result<bool> {
    if spec.p_lazy >= 1.0 || spec.p_lazy < 0.0 {
        return Err(CoreError::Domain(format!(
            "p_lazy = {} outside [0, 1)",
            spec.p_lazy
        )));
    }
    if spec.p == 0.0 {
        return Ok(false);
    }
    let rhs = (2.0 * spec.p_lazy - 1.0) / (1.0 - spec.p_lazy);
    Ok(spec.r / spec.p < rhs)
}

/// The lazy-action probability at which the failure inequality becomes an
/// equality: p* = (R + P) / (R + 2P), computed as (t + 1)/(t + 2) with
/// t = R/P so that boundary_pl(P, P) is exactly 2/3 and boundary_pl(0, P)
/// exactly 1/2. For P = 0 the boundary is 1 (never fails).
pub fn boundary_pl(r: f64, p: f64) -> f64 {
    if p == 0.0 {
        return 1.0;
    }
    let t = r / p;
    (t + 1.0) / (t + 2.0)
}

/// Converged values of a context-blind utility in a 2-agent game: the
/// expected payoff of each own action under the other agent's mixed policy.
pub fn averaged_q(payoff: &PayoffTensor, other_policy: &[f64]) -> Result<Vec<f64>> {
    if payoff.num_agents() != 2 {
        return Err(CoreError::Usage(format!(
            "averaged_q is defined for 2-agent payoffs, got {}",
            payoff.num_agents()
        )));
    }
    let a = payoff.num_actions();
    if other_policy.len() != a {
        return Err(CoreError::Usage(format!(
            "policy has {} entries for {a} actions",
            other_policy.len()
        )));
    }
    let total: f64 = other_policy.iter().sum();
    if (total - 1.0).abs() > 1e-9 || other_policy.iter().any(|&p| p < 0.0) {
        return Err(CoreError::Usage("other_policy is not a distribution".into()));
    }
    let mut q = vec![0.0; a];
    for (own, qv) in q.iter_mut().enumerate() {
        for (other, &p) in other_policy.iter().enumerate() {
            *qv += p * payoff.reward(&[own, other])?;
        }
    }
    Ok(q)
}

/// One interaction term: a reward table over the joint actions of a subset
/// of agents. Stored as the per-member share so the equal split is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTerm {
    /// Sorted member ids.
    pub members: Vec<usize>,
    /// Share table indexed by the members' joint sub-action (row-major,
    /// first member slowest). The term's value is `members.len() * share`.
    pub shares: Vec<f64>,
}

impl InteractionTerm {
    fn share(&self, joint: &[usize], num_actions: usize) -> f64 {
        let mut idx = 0;
        for &m in &self.members {
            idx = idx * num_actions + joint[m];
        }
        self.shares[idx]
    }
}

/// An N-agent one-step game whose total reward is a sum of interaction
/// terms, together with the visibility relation between agents.
#[derive(Debug, Clone)]
pub struct InteractionGame {
    pub num_agents: usize,
    pub num_actions: usize,
    pub terms: Vec<InteractionTerm>,
    /// visibility[i][j]: agent i sees agent j.
    pub visibility: Vec<Vec<bool>>,
}

impl InteractionGame {
    pub fn new(num_agents: usize, num_actions: usize, terms: Vec<InteractionTerm>) -> Result<Self> {
        let visibility = vec![vec![true; num_agents]; num_agents];
        Self::with_visibility(num_agents, num_actions, terms, visibility)
    }

    pub fn with_visibility(
        num_agents: usize,
        num_actions: usize,
        terms: Vec<InteractionTerm>,
        visibility: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let mut seen: Vec<&[usize]> = Vec::new();
        for t in &terms {
            if t.members.is_empty() || t.members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CoreError::Config("term members must be sorted and distinct".into()));
            }
            if *t.members.last().unwrap() >= num_agents {
                return Err(CoreError::Config("term member out of range".into()));
            }
            if seen.iter().any(|m| *m == t.members.as_slice()) {
                return Err(CoreError::Config("duplicate term subset".into()));
            }
            seen.push(&t.members);
            let want = num_actions.pow(t.members.len() as u32);
            if t.shares.len() != want {
                return Err(CoreError::Config(format!(
                    "term over {:?} needs {want} entries, got {}",
                    t.members,
                    t.shares.len()
                )));
            }
        }
        Ok(InteractionGame {
            num_agents,
            num_actions,
            terms,
            visibility,
        })
    }

    /// Total reward of a joint action: the sum of all term values.
    pub fn total_reward(&self, joint: &[usize]) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            total += t.members.len() as f64 * t.share(joint, self.num_actions);
        }
        total
    }

    fn mutually_visible(&self, members: &[usize]) -> bool {
        members.iter().all(|&i| {
            members
                .iter()
                .all(|&j| i == j || (self.visibility[i][j] && self.visibility[j][i]))
        })
    }

    /// Iterates all |A|^N joint actions.
    pub fn joint_actions(&self) -> JointActionIter {
        JointActionIter {
            current: vec![0; self.num_agents],
            num_actions: self.num_actions,
            exhausted: self.num_agents == 0,
        }
    }
}

pub struct JointActionIter {
    current: Vec<usize>,
    num_actions: usize,
    exhausted: bool,
}

impl Iterator for JointActionIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.exhausted {
            return None;
        }
        let out = self.current.clone();
        // odometer increment
        let mut i = self.current.len();
        loop {
            if i == 0 {
                self.exhausted = true;
                break;
            }
            i -= 1;
            self.current[i] += 1;
            if self.current[i] < self.num_actions {
                break;
            }
            self.current[i] = 0;
        }
        Some(out)
    }
}

/// Per-agent team rewards of a joint action: each active interaction term is
/// split equally among its members. Requires every term's subset to be
/// mutually visible.
pub fn team_rewards(game: &InteractionGame, joint: &[usize]) -> Result<Vec<f64>> {
    if joint.len() != game.num_agents {
        return Err(CoreError::Usage(format!(
            "{} actions for {} agents",
            joint.len(),
            game.num_agents
        )));
    }
    let mut out = vec![0.0; game.num_agents];
    for t in &game.terms {
        if !game.mutually_visible(&t.members) {
            return Err(CoreError::Contract(format!(
                "interaction subset {:?} is not mutually visible",
                t.members
            )));
        }
        let share = t.share(joint, game.num_actions);
        for &m in &t.members {
            out[m] += share;
        }
    }
    Ok(out)
}

/// Outcome of the argmax-consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub pass: bool,
    /// On failure: (joint optimum, offending agent, better action).
    pub witness: Option<(Vec<usize>, usize, usize)>,
}

/// Verifies by exhaustive enumeration that the equal-share utilities realise
/// the joint optimum: for each agent, its component of the argmax of the
/// total reward must be contained in the argmax set of its own tabular
/// utility given the others' optimal actions.
pub fn verify_theorem1(game: &InteractionGame) -> Result<TheoremReport> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for joint in game.joint_actions() {
        let r = game.total_reward(&joint);
        if best.as_ref().map(|(b, _)| r > *b).unwrap_or(true) {
            best = Some((r, joint));
        }
    }
    let (_, opt) = best.ok_or_else(|| CoreError::Usage("empty game".into()))?;
    for agent in 0..game.num_agents {
        let mut my = opt.clone();
        let own_value = |joint: &Vec<usize>| -> Result<f64> {
            Ok(team_rewards(game, joint)?[agent])
        };
        let at_opt = own_value(&opt)?;
        for a in 0..game.num_actions {
            my[agent] = a;
            if own_value(&my)? > at_opt {
                return Ok(TheoremReport {
                    pass: false,
                    witness: Some((opt, agent, a)),
                });
            }
        }
    }
    Ok(TheoremReport {
        pass: true,
        witness: None,
    })
}

/// Quantisation grid for random interaction terms. Shares are multiples of
/// 2^-20 bounded by 1, so every sum that appears in conservation checks is
/// exact in f64 arithmetic.
const SHARE_GRID: f64 = 1.0 / (1 << 20) as f64;

fn quantised_uniform(rng: &mut Rng) -> f64 {
    let steps = (1 << 21) + 1; // odd count keeps the grid symmetric around 0
    (rng.below(steps) as f64 - (1 << 20) as f64) * SHARE_GRID
}

/// Random mutually-visible game. All subsets of the given size are activated
/// independently with probability 1/2 (at least one is forced) and their
/// share tables are drawn uniformly from a quantised [-1, 1].
///
/// Terms within one game share a single subset size: the equal-share
/// utilities then order own actions exactly like the total reward does,
/// which is the regime the argmax identity holds in.
pub fn random_game(num_agents: usize, num_actions: usize, term_size: usize, rng: &mut Rng) -> InteractionGame {
    assert!(term_size >= 1 && term_size <= num_agents);
    let subsets = enumerate_subsets(num_agents, term_size);
    let mut terms = Vec::new();
    loop {
        for s in &subsets {
            if rng.chance(0.5) {
                let n = num_actions.pow(s.len() as u32);
                let shares: Vec<f64> = (0..n).map(|_| quantised_uniform(rng)).collect();
                terms.push(InteractionTerm {
                    members: s.clone(),
                    shares,
                });
            }
        }
        if !terms.is_empty() {
            break;
        }
    }
    InteractionGame::new(num_agents, num_actions, terms).expect("generator invariants")
}

fn enumerate_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// One cell of the failure-region sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub r: f64,
    pub p: f64,
    pub p_lazy: f64,
    pub fails: bool,
}

/// Evaluates the failure condition over the product grid.
pub fn sweep_failure_region(
    r_grid: &[f64],
    p_grid: &[f64],
    pl_grid: &[f64],
) -> Result<Vec<SweepCell>> {
    let mut out = Vec::with_capacity(r_grid.len() * p_grid.len() * pl_grid.len());
    for &r in r_grid {
        for &p in p_grid {
            for &pl in pl_grid {
                let fails = fails_monotonic(PayoffSpec { r, p, p_lazy: pl })?;
                out.push(SweepCell {
                    r,
                    p,
                    p_lazy: pl,
                    fails,
                });
            }
        }
    }
    Ok(out)
}
