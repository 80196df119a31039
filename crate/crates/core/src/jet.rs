//! Truncated Taylor series arithmetic. Used to get exact higher derivatives of
//! the builtin potential families without finite differences.

/// Taylor coefficients c_0..c_n of a function around a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet(pub Vec<f64>);

impl Jet {
    pub fn constant(c: f64, n: usize) -> Self {
        let mut v = vec![0.0; n + 1];
        v[0] = c;
        Jet(v)
    }

    /// The identity t around t0.
    pub fn variable(t0: f64, n: usize) -> Self {
        let mut v = vec![0.0; n + 1];
        v[0] = t0;
        if n >= 1 {
            v[1] = 1.0;
        }
        Jet(v)
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    /// l-th derivative at the expansion point.
    pub fn derivative(&self, l: usize) -> f64 {
        let mut f = 1.0;
        for k in 2..=l {
            f *= k as f64;
        }
        self.0[l] * f
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet(self.0.iter().map(|a| a * s).collect())
    }

    pub fn shift(&self, c: f64) -> Jet {
        let mut v = self.0.clone();
        v[0] += c;
        Jet(v)
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let n = self.order();
        let mut v = vec![0.0; n + 1];
        for (i, a) in self.0.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for j in 0..=(n - i) {
                v[i + j] += a * o.0[j];
            }
        }
        Jet(v)
    }

    pub fn powi(&self, p: u32) -> Jet {
        let mut r = Jet::constant(1.0, self.order());
        for _ in 0..p {
            r = r.mul(self);
        }
        r
    }

    pub fn recip(&self) -> Jet {
        let n = self.order();
        let b = &self.0;
        let mut q = vec![0.0; n + 1];
        q[0] = 1.0 / b[0];
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| b[j] * q[k - j]).sum();
            q[k] = -s / b[0];
        }
        Jet(q)
    }

    pub fn div(&self, o: &Jet) -> Jet {
        self.mul(&o.recip())
    }

    pub fn exp(&self) -> Jet {
        let n = self.order();
        let x = &self.0;
        let mut e = vec![0.0; n + 1];
        e[0] = x[0].exp();
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| j as f64 * x[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Jet(e)
    }

    /// tanh via y' = (1 - y^2) x'.
    pub fn tanh(&self) -> Jet {
        let n = self.order();
        let x = &self.0;
        let mut y = vec![0.0; n + 1];
        let mut z = vec![0.0; n + 1];
        y[0] = x[0].tanh();
        z[0] = 1.0 - y[0] * y[0];
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| j as f64 * x[j] * z[k - j]).sum();
            y[k] = s / k as f64;
            let sq: f64 = (0..=k).map(|i| y[i] * y[k - i]).sum();
            z[k] = -sq;
        }
        Jet(y)
    }
}
