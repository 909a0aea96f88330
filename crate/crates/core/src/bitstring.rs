//! Bit-string encoding of document sets for the accumulator scheme.
//!
//! A mask of width `y` carries document slots `0..y-1` in its low bits,
//! with bit `y-1` reserved as the sign bit, so capacity is `y - 1`
//! documents. Insertion adds `2^slot`; deletion adds the two's complement
//! `2^y - 2^slot`, which cancels a prior insertion modulo `2^y`. Because
//! the accumulator lives in `Z_n` (not `Z_{2^y}`), deletion carries pile up
//! above bit `y` and are discarded by reducing mod `2^y` at decode time.
//!
//! Decoding is only meaningful under the balanced-ops contract: never
//! delete an absent slot, never double-add, and keep the total accumulation
//! below the plaintext modulus (see [`max_safe_updates`]).

use crate::{Error, Result};
use num_bigint::BigUint;
use num_traits::One;
use std::collections::BTreeSet;

/// A plaintext add- or delete-mask of width `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStringMask {
    width: u32,
    value: BigUint,
}

impl BitStringMask {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }
}

/// Number of usable document slots for mask width `y`.
pub fn slot_capacity(width: u32) -> u32 {
    width.saturating_sub(1)
}

fn check_slot(slot: u32, width: u32) -> Result<()> {
    if width < 2 || slot > width - 2 {
        return Err(Error::SlotOutOfRange { slot, width });
    }
    Ok(())
}

/// Insertion mask: `2^slot`.
pub fn encode_add(slot: u32, width: u32) -> Result<BitStringMask> {
    check_slot(slot, width)?;
    Ok(BitStringMask { width, value: BigUint::one() << slot })
}

/// Deletion mask: `2^width - 2^slot`, the two's complement of the
/// insertion mask within `width` bits.
pub fn encode_del(slot: u32, width: u32) -> Result<BitStringMask> {
    check_slot(slot, width)?;
    Ok(BitStringMask { width, value: (BigUint::one() << width) - (BigUint::one() << slot) })
}

/// Reads the slot set out of an accumulated mask sum. Carries from
/// deletions land at bit `width` and above and vanish under the reduction.
pub fn decode(accumulated: &BigUint, width: u32) -> BTreeSet<u32> {
    let reduced = accumulated % (BigUint::one() << width);
    let mut slots = BTreeSet::new();
    for slot in 0..slot_capacity(width) {
        if reduced.bit(slot as u64) {
            slots.insert(slot);
        }
    }
    slots
}

/// How many delete operations a single accumulator can absorb before its
/// total could wrap the plaintext modulus and corrupt the readout:
/// `floor((n - 2^width) / 2^width)`.
pub fn max_safe_updates(width: u32, modulus: &BigUint) -> Result<BigUint> {
    let span = BigUint::one() << width;
    if span >= *modulus {
        return Err(Error::MaskWidthTooLarge { width });
    }
    Ok((modulus - &span) / &span)
}
