//! Random prime generation: small-prime sieve plus Miller-Rabin.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use std::sync::OnceLock;

const MILLER_RABIN_ROUNDS: usize = 32;

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let limit = 2048usize;
        let mut sieve = vec![true; limit];
        let mut primes = Vec::new();
        for p in 2..limit {
            if sieve[p] {
                primes.push(p as u64);
                for q in (p * p..limit).step_by(p) {
                    sieve[q] = false;
                }
            }
        }
        primes
    })
}

/// Generates a random probable prime of exactly `bits` bits with the two
/// top bits set, so products of two such primes have exact bit length.
pub fn gen_prime(bits: usize, rng: &mut impl RngCore) -> BigUint {
    assert!(bits >= 8, "prime size too small");
    loop {
        let mut candidate = rng.gen_biguint(bits as u64);
        candidate.set_bit(0, true);
        candidate.set_bit(bits as u64 - 1, true);
        candidate.set_bit(bits as u64 - 2, true);
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

pub fn is_probable_prime(n: &BigUint, rng: &mut impl RngCore) -> bool {
    if n < &BigUint::from(2u64) {
        return false;
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    miller_rabin(n, MILLER_RABIN_ROUNDS, rng)
}

fn miller_rabin(n: &BigUint, rounds: usize, rng: &mut impl RngCore) -> bool {
    let one = BigUint::one();
    let two = BigUint::from(2u64);
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;

    'witness: for i in 0..rounds {
        // Base 2 first, then random bases in [2, n-2].
        let a = if i == 0 {
            two.clone()
        } else {
            rng.gen_biguint_range(&two, &n_minus_1)
        };
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Modular inverse via extended gcd; `None` when gcd(a, m) != 1.
pub fn mod_inverse(a: &BigUint, modulus: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let a = BigInt::from(a.clone());
    let m = BigInt::from(modulus.clone());
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return None;
    }
    let mut x = ext.x % &m;
    if x.sign() == num_bigint::Sign::Minus {
        x += &m;
    }
    x.to_biguint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn known_composites_and_primes() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for p in [2u64, 3, 5, 65537, 2147483647] {
            assert!(is_probable_prime(&BigUint::from(p), &mut rng), "{p}");
        }
        for c in [1u64, 4, 561, 65536, 2147483647 * 3] {
            assert!(!is_probable_prime(&BigUint::from(c), &mut rng), "{c}");
        }
        // Carmichael number 341550071728321 fools weak tests.
        assert!(!is_probable_prime(&BigUint::from(341550071728321u64), &mut rng));
    }

    #[test]
    fn generated_primes_have_exact_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..4 {
            let p = gen_prime(96, &mut rng);
            assert_eq!(p.bits(), 96);
            assert!(is_probable_prime(&p, &mut rng));
        }
    }

    #[test]
    fn mod_inverse_agrees_with_definition() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let m = gen_prime(64, &mut rng);
        for _ in 0..32 {
            let a = rng.gen_biguint_range(&BigUint::one(), &m);
            let inv = mod_inverse(&a, &m).unwrap();
            assert!((a * inv % &m).is_one());
        }
        assert!(mod_inverse(&BigUint::from(6u64), &BigUint::from(9u64)).is_none());
    }
}
