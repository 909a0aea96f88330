//! Trapdoor permutation over `Z_N^*`, instantiated as modular
//! exponentiation with an RSA-style keypair. The forward direction uses the
//! public exponent; the inverse uses the secret exponent with a CRT
//! speedup.

use super::primes;
use crate::{Error, Result};
use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

const PUBLIC_EXPONENT: u64 = 65537;

/// A search token: one element of the permutation domain, serialized as a
/// fixed-width big-endian byte string (the width is set by the modulus).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SearchToken(Vec<u8>);

impl SearchToken {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        SearchToken(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.0)
    }

    fn from_biguint(value: &BigUint, width: usize) -> Self {
        let mut bytes = value.to_bytes_be();
        assert!(bytes.len() <= width, "value wider than token width");
        let mut out = vec![0u8; width - bytes.len()];
        out.append(&mut bytes);
        SearchToken(out)
    }
}

impl std::fmt::Debug for SearchToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SearchToken({}..)", hex::encode(&self.0[..self.0.len().min(6)]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TdpPublicKey {
    modulus: BigUint,
    exponent: BigUint,
}

impl TdpPublicKey {
    pub fn new(modulus: BigUint, exponent: BigUint) -> Self {
        TdpPublicKey { modulus, exponent }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn exponent(&self) -> &BigUint {
        &self.exponent
    }

    /// Fixed token width for this modulus, in bytes.
    pub fn token_width(&self) -> usize {
        (self.modulus.bits() as usize).div_ceil(8)
    }
}

/// Secret half: factorization plus CRT exponents.
#[derive(Clone, PartialEq, Eq)]
pub struct TdpSecretKey {
    p: BigUint,
    q: BigUint,
    d: BigUint,
    d_p: BigUint,
    d_q: BigUint,
    q_inv_p: BigUint,
}

impl std::fmt::Debug for TdpSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TdpSecretKey(..)")
    }
}

#[derive(Debug, Clone)]
pub struct TdpKeypair {
    pub public: TdpPublicKey,
    secret: TdpSecretKey,
}

impl TdpKeypair {
    /// Reassembles a keypair from its stored secret components.
    pub fn from_parts(p: BigUint, q: BigUint, d: BigUint) -> Self {
        let modulus = &p * &q;
        let one = BigUint::one();
        let d_p = &d % (&p - &one);
        let d_q = &d % (&q - &one);
        let q_inv_p = primes::mod_inverse(&q, &p).expect("p, q coprime");
        TdpKeypair {
            public: TdpPublicKey { modulus, exponent: BigUint::from(PUBLIC_EXPONENT) },
            secret: TdpSecretKey { p, q, d, d_p, d_q, q_inv_p },
        }
    }

    pub fn secret_parts(&self) -> (&BigUint, &BigUint, &BigUint) {
        (&self.secret.p, &self.secret.q, &self.secret.d)
    }
}

/// Generates a keypair with a modulus of exactly `bits` bits.
pub fn keygen(bits: usize, rng: &mut impl RngCore) -> TdpKeypair {
    assert!(bits >= 64 && bits.is_multiple_of(2), "modulus size too small or odd");
    let e = BigUint::from(PUBLIC_EXPONENT);
    loop {
        let p = primes::gen_prime(bits / 2, rng);
        let q = primes::gen_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let one = BigUint::one();
        let phi = (&p - &one) * (&q - &one);
        let Some(d) = primes::mod_inverse(&e, &phi) else {
            continue; // e divides phi; extremely rare, redraw
        };
        return TdpKeypair::from_parts(p, q, d);
    }
}

fn check_domain(x: &BigUint, pk: &TdpPublicKey) -> Result<()> {
    if x.is_zero() || x >= pk.modulus() || !x.gcd(pk.modulus()).is_one() {
        return Err(Error::NotInDomain);
    }
    Ok(())
}

/// Forward direction: anyone holding the public key can compute it.
pub fn forward(pk: &TdpPublicKey, token: &SearchToken) -> Result<SearchToken> {
    let x = token.to_biguint();
    check_domain(&x, pk)?;
    let y = x.modpow(&pk.exponent, &pk.modulus);
    Ok(SearchToken::from_biguint(&y, pk.token_width()))
}

/// Inverse direction: requires the secret key. CRT split halves the
/// exponentiation width.
pub fn inverse(kp: &TdpKeypair, token: &SearchToken) -> Result<SearchToken> {
    let y = token.to_biguint();
    check_domain(&y, &kp.public)?;
    let s = &kp.secret;
    let x_p = y.modpow(&s.d_p, &s.p);
    let x_q = y.modpow(&s.d_q, &s.q);
    let diff = if x_p >= x_q {
        (&x_p - &x_q) % &s.p
    } else {
        &s.p - (&x_q - &x_p) % &s.p
    };
    let h = (&s.q_inv_p * diff) % &s.p;
    let x = x_q + &s.q * h;
    Ok(SearchToken::from_biguint(&x, kp.public.token_width()))
}

/// Draws a uniform element of the permutation domain.
pub fn sample(pk: &TdpPublicKey, rng: &mut impl RngCore) -> SearchToken {
    loop {
        let x = rng.gen_biguint_range(&BigUint::one(), pk.modulus());
        if x.gcd(pk.modulus()).is_one() {
            return SearchToken::from_biguint(&x, pk.token_width());
        }
    }
}
