//! Paillier cryptosystem with `g = n + 1`, which admits the short
//! encryption form `c = (1 + m*n) * r^n mod n^2` and makes ciphertext
//! multiplication a homomorphic plaintext addition.

use super::primes;
use crate::{Error, Result};
use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierPublicKey {
    n: BigUint,
    n_squared: BigUint,
}

impl PaillierPublicKey {
    pub fn new(n: BigUint) -> Self {
        let n_squared = &n * &n;
        PaillierPublicKey { n, n_squared }
    }

    pub fn modulus(&self) -> &BigUint {
        &self.n
    }

    /// Fixed ciphertext width: two modulus lengths.
    pub fn ciphertext_width(&self) -> usize {
        2 * (self.n.bits() as usize).div_ceil(8)
    }
}

/// Secret half: `beta = phi(n)` and `mu = phi(n)^-1 mod n`.
#[derive(Clone, PartialEq, Eq)]
pub struct PaillierSecretKey {
    beta: BigUint,
    mu: BigUint,
}

impl PaillierSecretKey {
    pub fn from_parts(beta: BigUint, mu: BigUint) -> Self {
        PaillierSecretKey { beta, mu }
    }

    pub fn parts(&self) -> (&BigUint, &BigUint) {
        (&self.beta, &self.mu)
    }
}

impl std::fmt::Debug for PaillierSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PaillierSecretKey(..)")
    }
}

#[derive(Debug, Clone)]
pub struct PaillierKeypair {
    pub public: PaillierPublicKey,
    pub secret: PaillierSecretKey,
}

/// A Paillier ciphertext, fixed-width serialized as big-endian bytes of
/// length [`PaillierPublicKey::ciphertext_width`].
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext(BigUint);

impl Ciphertext {
    pub fn to_fixed_bytes(&self, pk: &PaillierPublicKey) -> Vec<u8> {
        let mut bytes = self.0.to_bytes_be();
        let width = pk.ciphertext_width();
        assert!(bytes.len() <= width);
        let mut out = vec![0u8; width - bytes.len()];
        out.append(&mut bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8], pk: &PaillierPublicKey) -> Result<Self> {
        if bytes.len() != pk.ciphertext_width() {
            return Err(Error::TokenWidth { expected: pk.ciphertext_width(), got: bytes.len() });
        }
        let value = BigUint::from_bytes_be(bytes);
        if value.is_zero() || value >= pk.n_squared {
            return Err(Error::MalformedCiphertext);
        }
        Ok(Ciphertext(value))
    }

    /// Wraps a raw value without range validation; the store validates
    /// against its own modulus before accepting a mutation.
    pub fn from_biguint_unchecked(value: BigUint) -> Self {
        Ciphertext(value)
    }

    /// Whether this value is a plausible ciphertext under `pk`.
    pub fn in_range(&self, pk: &PaillierPublicKey) -> bool {
        !self.0.is_zero() && self.0 < pk.n_squared
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl std::fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Ciphertext(..)")
    }
}

/// Generates a keypair with modulus `n` of exactly `bits` bits.
pub fn keygen(bits: usize, rng: &mut impl RngCore) -> PaillierKeypair {
    assert!(bits >= 64 && bits.is_multiple_of(2), "modulus size too small or odd");
    loop {
        let p = primes::gen_prime(bits / 2, rng);
        let q = primes::gen_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        let one = BigUint::one();
        let beta = (&p - &one) * (&q - &one);
        let Some(mu) = primes::mod_inverse(&beta, &n) else {
            continue; // gcd(phi, n) != 1; redraw
        };
        return PaillierKeypair {
            public: PaillierPublicKey::new(n),
            secret: PaillierSecretKey { beta, mu },
        };
    }
}

/// Encrypts `m` with fresh randomness.
pub fn enc(pk: &PaillierPublicKey, m: &BigUint, rng: &mut impl RngCore) -> Result<Ciphertext> {
    let r = loop {
        let r = rng.gen_biguint_range(&BigUint::one(), &pk.n);
        if r.gcd(&pk.n).is_one() {
            break r;
        }
    };
    enc_with(pk, m, &r)
}

/// Encrypts `m` with caller-supplied randomness `r` in `Z_n^*`.
pub fn enc_with(pk: &PaillierPublicKey, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
    if m >= &pk.n {
        return Err(Error::PlaintextOutOfRange);
    }
    if r.is_zero() || r >= &pk.n || !r.gcd(&pk.n).is_one() {
        return Err(Error::MalformedCiphertext);
    }
    // (1 + m*n) * r^n mod n^2, using g = n + 1.
    let g_m = (BigUint::one() + m * &pk.n) % &pk.n_squared;
    let r_n = r.modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext(g_m * r_n % &pk.n_squared))
}

/// Decrypts: `L(c^beta mod n^2) * mu mod n`, with `L(x) = (x - 1) / n`.
pub fn dec(pk: &PaillierPublicKey, sk: &PaillierSecretKey, c: &Ciphertext) -> Result<BigUint> {
    if c.0.is_zero() || c.0 >= pk.n_squared || !c.0.gcd(&pk.n).is_one() {
        return Err(Error::MalformedCiphertext);
    }
    let x = c.0.modpow(&sk.beta, &pk.n_squared);
    let l = (&x - BigUint::one()) / &pk.n;
    Ok(l * &sk.mu % &pk.n)
}

/// Homomorphic addition: the product of ciphertexts decrypts to the sum of
/// plaintexts mod n.
pub fn add(pk: &PaillierPublicKey, c1: &Ciphertext, c2: &Ciphertext) -> Result<Ciphertext> {
    for c in [c1, c2] {
        if c.0.is_zero() || c.0 >= pk.n_squared {
            return Err(Error::MalformedCiphertext);
        }
    }
    Ok(Ciphertext(&c1.0 * &c2.0 % &pk.n_squared))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn test_keypair(seed: u64) -> PaillierKeypair {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        keygen(256, &mut rng)
    }

    #[test]
    fn decrypt_of_encrypt_is_identity() {
        let kp = test_keypair(21);
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        assert_eq!(
            dec(&kp.public, &kp.secret, &enc(&kp.public, &BigUint::zero(), &mut rng).unwrap())
                .unwrap(),
            BigUint::zero()
        );
        for _ in 0..20 {
            let m = rng.gen_biguint_below(kp.public.modulus());
            let c = enc(&kp.public, &m, &mut rng).unwrap();
            assert_eq!(dec(&kp.public, &kp.secret, &c).unwrap(), m);
        }
    }

    #[test]
    fn small_modulus_matches_textbook_form() {
        // Tiny keypair assembled by hand: p = 5, q = 7, n = 35.
        let p = BigUint::from(5u64);
        let q = BigUint::from(7u64);
        let n = &p * &q;
        let beta = (&p - 1u64) * (&q - 1u64);
        let mu = primes::mod_inverse(&beta, &n).unwrap();
        let pk = PaillierPublicKey::new(n.clone());
        let sk = PaillierSecretKey { beta, mu };

        // Check the short form against literal g^m * r^n mod n^2 with g = n+1.
        let n_squared = &n * &n;
        let g = &n + BigUint::one();
        for m in 0..35u64 {
            for r in [2u64, 3, 4, 6, 8, 9, 11] {
                let m = BigUint::from(m);
                let r = BigUint::from(r);
                let textbook = g.modpow(&m, &n_squared) * r.modpow(&n, &n_squared) % &n_squared;
                let short = enc_with(&pk, &m, &r).unwrap();
                assert_eq!(short.value(), &textbook);
                assert_eq!(dec(&pk, &sk, &short).unwrap(), m);
            }
        }

        // 2 + 3 = 5 through the homomorphism.
        let c2 = enc_with(&pk, &BigUint::from(2u64), &BigUint::from(3u64)).unwrap();
        let c3 = enc_with(&pk, &BigUint::from(3u64), &BigUint::from(4u64)).unwrap();
        let sum = add(&pk, &c2, &c3).unwrap();
        assert_eq!(dec(&pk, &sk, &sum).unwrap(), BigUint::from(5u64));
    }

    #[test]
    fn encryption_is_randomized() {
        let kp = test_keypair(23);
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let m = BigUint::from(77u64);
        let c1 = enc(&kp.public, &m, &mut rng).unwrap();
        let c2 = enc(&kp.public, &m, &mut rng).unwrap();
        assert_ne!(c1, c2);
        assert_eq!(dec(&kp.public, &kp.secret, &c1).unwrap(), m);
        assert_eq!(dec(&kp.public, &kp.secret, &c2).unwrap(), m);
    }

    #[test]
    fn homomorphic_sum_over_many_ciphertexts() {
        let kp = test_keypair(25);
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        let mut acc: Option<Ciphertext> = None;
        let mut expected = BigUint::zero();
        for _ in 0..1000 {
            let m = rng.gen_biguint_below(kp.public.modulus());
            expected = (expected + &m) % kp.public.modulus();
            let c = enc(&kp.public, &m, &mut rng).unwrap();
            acc = Some(match acc {
                None => c,
                Some(prev) => add(&kp.public, &prev, &c).unwrap(),
            });
        }
        assert_eq!(dec(&kp.public, &kp.secret, &acc.unwrap()).unwrap(), expected);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        let kp = test_keypair(27);
        let mut rng = ChaCha20Rng::seed_from_u64(28);
        let too_big = kp.public.modulus().clone();
        assert!(matches!(
            enc(&kp.public, &too_big, &mut rng),
            Err(Error::PlaintextOutOfRange)
        ));
        let garbage = Ciphertext(BigUint::zero());
        assert!(dec(&kp.public, &kp.secret, &garbage).is_err());
        let width = kp.public.ciphertext_width();
        assert!(Ciphertext::from_bytes(&vec![0u8; width], &kp.public).is_err());
        assert!(Ciphertext::from_bytes(&vec![0u8; width + 1], &kp.public).is_err());
    }

    #[test]
    fn fixed_width_serialization_roundtrips() {
        let kp = test_keypair(29);
        let mut rng = ChaCha20Rng::seed_from_u64(30);
        for _ in 0..20 {
            let m = rng.gen_biguint_below(kp.public.modulus());
            let c = enc(&kp.public, &m, &mut rng).unwrap();
            let bytes = c.to_fixed_bytes(&kp.public);
            assert_eq!(bytes.len(), kp.public.ciphertext_width());
            let back = Ciphertext::from_bytes(&bytes, &kp.public).unwrap();
            assert_eq!(back, c);
        }
    }
}
