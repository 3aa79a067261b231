//! SIMD linear algebra on packed ciphertexts.

use crate::ciphertext::Ciphertext;
use crate::error::{CkksError, Result};
use crate::evaluator::Evaluator;
use crate::keys::{power_of_two_steps, EvaluationKeys};

/// Slot layout of `modality_count` blocks of `template_len` values packed
/// back to back from slot 0; the tail of the slot vector stays zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PackedLayout {
    template_len: usize,
    modality_count: usize,
    slot_capacity: usize,
}

impl PackedLayout {
    pub fn new(template_len: usize, modality_count: usize, slot_capacity: usize) -> Result<Self> {
        if template_len == 0 || modality_count == 0 {
            return Err(CkksError::InvalidParams("empty layout".into()));
        }
        match template_len.checked_mul(modality_count) {
            Some(total) if total <= slot_capacity => Ok(Self {
                template_len,
                modality_count,
                slot_capacity,
            }),
            _ => Err(CkksError::TooManyValues {
                len: template_len.saturating_mul(modality_count),
                slots: slot_capacity,
            }),
        }
    }

    pub fn template_len(&self) -> usize {
        self.template_len
    }

    pub fn modality_count(&self) -> usize {
        self.modality_count
    }

    pub fn slot_capacity(&self) -> usize {
        self.slot_capacity
    }

    /// Slot range of block `j` (1-based).
    pub fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        let start = (block - 1) * self.template_len;
        start..start + self.template_len
    }

    /// Left-rotation step moving block `from` onto the slots of block `to`.
    pub fn shift_between(&self, from: usize, to: usize) -> usize {
        let delta = to as i64 - from as i64;
        (delta * self.template_len as i64).rem_euclid(self.slot_capacity as i64) as usize
    }

    /// Every nonzero alignment step between any two blocks.
    pub fn alignment_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (1..=self.modality_count)
            .flat_map(|a| (1..=self.modality_count).map(move |b| (a, b)))
            .map(|(a, b)| self.shift_between(a, b))
            .filter(|&s| s != 0)
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    /// Rotation steps needed by inner products and block alignment.
    pub fn required_rotation_steps(&self) -> Vec<usize> {
        let mut steps = power_of_two_steps(self.slot_capacity);
        steps.extend(self.alignment_steps());
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

/// Sums all slots: after `log2(N/2)` rotate-and-add steps every slot holds
/// the total.
pub fn rotate_and_sum(ev: &Evaluator, ct: &Ciphertext, evk: &EvaluationKeys) -> Result<Ciphertext> {
    let slots = ev.context().slot_count();
    let mut acc = ct.clone();
    for step in power_of_two_steps(slots) {
        if !evk.has_step(step) {
            return Err(CkksError::MissingGaloisKey(step));
        }
        let rotated = ev.rotate(&acc, step as i64, evk)?;
        acc = ev.add(&acc, &rotated)?;
    }
    Ok(acc)
}

/// Encrypted inner product: one multiplication, then a full-ring
/// rotate-and-sum. Every slot of the result holds `sum_i a_i * b_i`.
pub fn inner_product(
    ev: &Evaluator,
    a: &Ciphertext,
    b: &Ciphertext,
    evk: &EvaluationKeys,
) -> Result<Ciphertext> {
    if let Some(missing) = power_of_two_steps(ev.context().slot_count())
        .into_iter()
        .find(|&s| !evk.has_step(s))
    {
        return Err(CkksError::MissingGaloisKey(missing));
    }
    let product = ev.mul(a, b, evk)?;
    rotate_and_sum(ev, &product, evk)
}

/// Moves block `to` of a reference whose block `from` currently sits at
/// slots `[0, d)` down to slots `[0, d)`. Block 1 of a fresh reference is
/// already aligned, so `realign(ref, 1, 1)` is the identity.
pub fn realign(
    ev: &Evaluator,
    reference: &Ciphertext,
    from: usize,
    to: usize,
    layout: &PackedLayout,
    evk: &EvaluationKeys,
) -> Result<Ciphertext> {
    check_block(from, layout)?;
    check_block(to, layout)?;
    let step = layout.shift_between(from, to);
    if step != 0 && !evk.has_step(step) {
        return Err(CkksError::MissingGaloisKey(step));
    }
    ev.rotate(reference, step as i64, evk)
}

/// Aligns block `stage` of a freshly packed reference to slots `[0, d)`.
pub fn block_align(
    ev: &Evaluator,
    reference: &Ciphertext,
    stage: usize,
    layout: &PackedLayout,
    evk: &EvaluationKeys,
) -> Result<Ciphertext> {
    realign(ev, reference, 1, stage, layout, evk)
}

fn check_block(block: usize, layout: &PackedLayout) -> Result<()> {
    if block == 0 || block > layout.modality_count() {
        return Err(CkksError::InvalidParams(format!(
            "block {block} outside 1..={}",
            layout.modality_count()
        )));
    }
    Ok(())
}

/// Adds a stage inner product to the running encrypted score.
pub fn accumulate_score(
    ev: &Evaluator,
    delta: Option<&Ciphertext>,
    stage_ip: &Ciphertext,
) -> Result<Ciphertext> {
    match delta {
        None => Ok(stage_ip.clone()),
        Some(acc) => {
            let ip = if stage_ip.level() > acc.level() {
                ev.drop_to_level(stage_ip, acc.level())?
            } else {
                stage_ip.clone()
            };
            let acc = if acc.level() > ip.level() {
                ev.drop_to_level(acc, ip.level())?
            } else {
                acc.clone()
            };
            ev.add(&acc, &ip)
        }
    }
}
