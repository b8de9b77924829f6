//! Simulated human edits and the edit tolerance limit.
//!
//! Edits never touch the prompt (or the first `m` positions, which have no
//! full context). An [`EditPlan`] fixes the order in which positions are
//! edited and the replacement tokens, so applying `k` edits is always a
//! prefix of applying `k + 1`. The tolerance search bisects on `k`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pivotal::pivot_series;
use crate::prf::Key;
use crate::rng::substream;
use crate::watermark::{Provenance, TokenSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Substitute,
    Insert,
    Delete,
    Adversarial,
}

impl EditKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sub" | "substitute" => Ok(EditKind::Substitute),
            "ins" | "insert" => Ok(EditKind::Insert),
            "del" | "delete" => Ok(EditKind::Delete),
            "adv" | "adversarial" => Ok(EditKind::Adversarial),
            other => invalid(format!("unknown edit kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditSpec {
    pub kind: EditKind,
    pub fraction: f64,
    pub seed: u64,
    pub vocab_size: usize,
}

impl EditSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return invalid(format!("edit fraction must lie in [0,1], got {}", self.fraction));
        }
        if self.vocab_size < 2 || self.vocab_size > u32::MAX as usize {
            return invalid(format!("bad vocab size {}", self.vocab_size));
        }
        Ok(())
    }
}

/// `ceil(fraction * len)`, guarded against float round-up.
pub fn edit_count(fraction: f64, len: usize) -> usize {
    let k = (fraction * len as f64 - 1e-9).ceil().max(0.0) as usize;
    k.min(len)
}

fn editable_start(seq: &TokenSeq) -> usize {
    seq.prompt_len().max(seq.m()).min(seq.len())
}

/// A nested edit schedule over the editable positions of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EditPlan {
    kind: EditKind,
    start: usize,
    // sequence positions in edit order
    order: Vec<usize>,
    // replacement or inserted token for the i-th edit
    tokens: Vec<u32>,
}

impl EditPlan {
    /// Uniformly random order of positions and uniform replacement tokens.
    pub fn random(seq: &TokenSeq, kind: EditKind, vocab_size: usize, seed: u64) -> Result<Self> {
        if kind == EditKind::Adversarial {
            return invalid("adversarial plans need a key; use EditPlan::adversarial");
        }
        let start = editable_start(seq);
        let mut rng = substream(seed, "edit-plan", &[]);
        let mut order: Vec<usize> = (start..seq.len()).collect();
        order.shuffle(&mut rng);
        let tokens = draw_tokens(&mut rng, order.len(), vocab_size)?;
        Ok(EditPlan {
            kind,
            start,
            order,
            tokens,
        })
    }

    /// Positions ordered by descending pivot under `key` (ties by position),
    /// each replaced by a uniform token.
    pub fn adversarial(seq: &TokenSeq, key: &Key, vocab_size: usize, seed: u64) -> Result<Self> {
        let start = editable_start(seq);
        let series = pivot_series(seq, key, vocab_size)?;
        let first = series.first_position();
        let y = series.y();
        let mut order: Vec<usize> = (start..seq.len()).collect();
        order.sort_by(|&a, &b| y[b - first].total_cmp(&y[a - first]).then(a.cmp(&b)));
        let mut rng = substream(seed, "edit-plan", &[]);
        let tokens = draw_tokens(&mut rng, order.len(), vocab_size)?;
        Ok(EditPlan {
            kind: EditKind::Adversarial,
            start,
            order,
            tokens,
        })
    }

    pub fn kind(&self) -> EditKind {
        self.kind
    }

    /// Number of editable positions, `n0`.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Apply the first `k` edits of the plan.
    pub fn apply(&self, seq: &TokenSeq, k: usize) -> Result<TokenSeq> {
        if k > self.order.len() {
            return invalid(format!("plan has {} edits, asked for {k}", self.order.len()));
        }
        if seq.len() != self.start + self.order.len() {
            return invalid("plan was built for a different sequence");
        }
        let m = seq.m();
        let mut tokens = seq.tokens().to_vec();
        let mut provenance = seq.provenance().to_vec();
        let chosen = &self.order[..k];
        match self.kind {
            EditKind::Substitute | EditKind::Adversarial => {
                for (&pos, &tok) in chosen.iter().zip(&self.tokens) {
                    tokens[pos] = tok;
                    provenance[pos] = Provenance::Edited;
                }
            }
            EditKind::Delete => {
                let mut drop = vec![false; tokens.len()];
                for &pos in chosen {
                    drop[pos] = true;
                }
                if tokens.len() - k < m + 1 {
                    return invalid(format!("deleting {k} tokens leaves fewer than m + 1 = {}", m + 1));
                }
                let keep = |i: &usize| !drop[*i];
                tokens = (0..tokens.len()).filter(keep).map(|i| tokens[i]).collect();
                provenance = (0..provenance.len()).filter(keep).map(|i| provenance[i]).collect();
            }
            EditKind::Insert => {
                // insertion i goes right before original position order[i]
                let mut before: Vec<Vec<u32>> = vec![Vec::new(); tokens.len()];
                for (&pos, &tok) in chosen.iter().zip(&self.tokens) {
                    before[pos].push(tok);
                }
                let mut out_t = Vec::with_capacity(tokens.len() + k);
                let mut out_p = Vec::with_capacity(tokens.len() + k);
                for (i, extra) in before.into_iter().enumerate() {
                    for tok in extra {
                        out_t.push(tok);
                        out_p.push(Provenance::Edited);
                    }
                    out_t.push(tokens[i]);
                    out_p.push(provenance[i]);
                }
                tokens = out_t;
                provenance = out_p;
            }
        }
        Ok(TokenSeq::from_parts_unchecked(tokens, provenance, m))
    }
}

fn draw_tokens<R: Rng>(rng: &mut R, count: usize, vocab_size: usize) -> Result<Vec<u32>> {
    if vocab_size < 2 || vocab_size > u32::MAX as usize {
        return invalid(format!("bad vocab size {vocab_size}"));
    }
    Ok((0..count).map(|_| rng.gen_range(0..vocab_size as u32)).collect())
}

/// Random substitution, insertion or deletion of `ceil(fraction * L)` tokens,
/// `L` the number of editable positions.
pub fn apply_random_edit(seq: &TokenSeq, spec: &EditSpec) -> Result<TokenSeq> {
    spec.validate()?;
    let plan = EditPlan::random(seq, spec.kind, spec.vocab_size, spec.seed)?;
    let k = edit_count(spec.fraction, plan.len());
    if spec.kind == EditKind::Insert {
        return insert_uniform(seq, k, spec);
    }
    plan.apply(seq, k)
}

// Insertions at independent uniform slots, so several may share a gap.
fn insert_uniform(seq: &TokenSeq, k: usize, spec: &EditSpec) -> Result<TokenSeq> {
    let start = editable_start(seq);
    let mut rng = substream(spec.seed, "insert", &[]);
    let mut tokens = seq.tokens().to_vec();
    let mut provenance = seq.provenance().to_vec();
    for _ in 0..k {
        let at = rng.gen_range(start..=tokens.len());
        tokens.insert(at, rng.gen_range(0..spec.vocab_size as u32));
        provenance.insert(at, Provenance::Edited);
    }
    Ok(TokenSeq::from_parts_unchecked(tokens, provenance, seq.m()))
}

/// Replace the `ceil(fraction * L)` editable positions with the largest
/// pivots by uniform tokens.
pub fn apply_adversarial_edit(seq: &TokenSeq, fraction: f64, key: &Key, vocab_size: usize, seed: u64) -> Result<TokenSeq> {
    let spec = EditSpec {
        kind: EditKind::Adversarial,
        fraction,
        seed,
        vocab_size,
    };
    spec.validate()?;
    let plan = EditPlan::adversarial(seq, key, vocab_size, seed)?;
    plan.apply(seq, edit_count(fraction, plan.len()))
}

/// Dispatch on `spec.kind`; `key` is required for adversarial edits.
pub fn apply_edit(seq: &TokenSeq, spec: &EditSpec, key: Option<&Key>) -> Result<TokenSeq> {
    match (spec.kind, key) {
        (EditKind::Adversarial, Some(key)) => apply_adversarial_edit(seq, spec.fraction, key, spec.vocab_size, spec.seed),
        (EditKind::Adversarial, None) => invalid("adversarial edits need the key"),
        _ => apply_random_edit(seq, spec),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceResult {
    /// Largest rejecting edit count over `n0`.
    pub limit: f64,
    pub edits: usize,
    pub n0: usize,
    /// False when the unedited text is already accepted; `limit` is then 0.
    pub unedited_rejected: bool,
    pub evaluations: usize,
}

fn scored_view(plan: &EditPlan, edited: &TokenSeq, n_test: usize) -> TokenSeq {
    edited.truncated(plan.start + n_test)
}

/// Bisection for the edit tolerance limit. Starting from `l = 1, u = n0`,
/// the midpoint replaces `l` when the detector still rejects and `u`
/// otherwise; the search stops once `u - l < 2` and reports `l / n0`.
/// `detector` sees the prompt plus the first `n_test` generated positions.
pub fn tolerance_limit<F>(seq: &TokenSeq, plan: &EditPlan, n_test: usize, mut detector: F) -> Result<ToleranceResult>
where
    F: FnMut(&TokenSeq) -> Result<bool>,
{
    if n_test == 0 {
        return invalid("n_test must be positive");
    }
    let n0 = plan.len();
    if n0 < 2 {
        return invalid(format!("need at least two editable positions, got {n0}"));
    }
    let mut evaluations = 1;
    if !detector(&scored_view(plan, seq, n_test))? {
        return Ok(ToleranceResult {
            limit: 0.0,
            edits: 0,
            n0,
            unedited_rejected: false,
            evaluations,
        });
    }
    let (mut lo, mut hi) = (1usize, n0);
    while hi - lo >= 2 {
        let mid = (lo + hi) / 2;
        let edited = plan.apply(seq, mid)?;
        evaluations += 1;
        if detector(&scored_view(plan, &edited, n_test))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ToleranceResult {
        limit: lo as f64 / n0 as f64,
        edits: lo,
        n0,
        unedited_rejected: true,
        evaluations,
    })
}

/// Exhaustive counterpart of [`tolerance_limit`]: the last count in a run of
/// rejections starting at one edit, floored at 1 and capped at `n0 - 1`
/// like the bisection bounds.
pub fn linear_scan_limit<F>(seq: &TokenSeq, plan: &EditPlan, n_test: usize, mut detector: F) -> Result<ToleranceResult>
where
    F: FnMut(&TokenSeq) -> Result<bool>,
{
    if n_test == 0 {
        return invalid("n_test must be positive");
    }
    let n0 = plan.len();
    if n0 < 2 {
        return invalid(format!("need at least two editable positions, got {n0}"));
    }
    let mut evaluations = 1;
    if !detector(&scored_view(plan, seq, n_test))? {
        return Ok(ToleranceResult {
            limit: 0.0,
            edits: 0,
            n0,
            unedited_rejected: false,
            evaluations,
        });
    }
    let mut last = 1;
    for k in 1..n0 {
        let edited = plan.apply(seq, k)?;
        evaluations += 1;
        if !detector(&scored_view(plan, &edited, n_test))? {
            break;
        }
        last = k;
    }
    Ok(ToleranceResult {
        limit: last as f64 / n0 as f64,
        edits: last,
        n0,
        unedited_rejected: true,
        evaluations,
    })
}
