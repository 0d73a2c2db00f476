//! A growing prime sieve.
//!
//! Modulus selection wants "the ascending primes above a bound, skipping
//! divisors of a fixed integer set". The sieve grows by doubling segments so
//! callers can pull an unbounded stream without guessing a limit up front.

/// Iterator over all primes in ascending order.
pub struct Primes {
    sieve: Vec<bool>, // sieve[i] = i is composite, for i < limit
    limit: usize,
    next: usize,
}

impl Primes {
    pub fn new() -> Self {
        Primes {
            sieve: vec![false; 4],
            limit: 4,
            next: 2,
        }
    }

    fn grow(&mut self) {
        let new_limit = self.limit * 2;
        let mut sieve = vec![false; new_limit];
        let mut p = 2;
        while p * p < new_limit {
            if !sieve[p] {
                let mut q = p * p;
                while q < new_limit {
                    sieve[q] = true;
                    q += p;
                }
            }
            p += 1;
        }
        self.sieve = sieve;
        self.limit = new_limit;
    }
}

impl Default for Primes {
    fn default() -> Self {
        Self::new()
    }
}

impl Iterator for Primes {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        loop {
            if self.next >= self.limit {
                self.grow();
            }
            let n = self.next;
            self.next += 1;
            if n >= 2 && !self.sieve[n] {
                return Some(n as u64);
            }
        }
    }
}

/// Deterministic Miller-Rabin for u64 (base set exact for all 64-bit inputs).
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_primes() {
        let got: Vec<u64> = Primes::new().take(10).collect();
        assert_eq!(got, [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn sieve_and_miller_rabin_agree() {
        let sieve: Vec<u64> = Primes::new().take_while(|&p| p < 2000).collect();
        for n in 0..2000u64 {
            assert_eq!(is_prime(n), sieve.contains(&n), "n = {n}");
        }
    }

    #[test]
    fn large_known_values() {
        assert!(is_prime(2_147_483_647)); // 2^31 - 1
        assert!(!is_prime(2_147_483_649));
        assert!(is_prime(1_000_000_007));
    }
}
