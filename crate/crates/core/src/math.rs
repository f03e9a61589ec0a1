//! Small log-domain helpers shared by the probability and quadrature code.

/// `log(sum(exp(xs)))`, returning `-inf` for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Streaming version of [`logsumexp`].
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    acc: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, acc: 0.0 }
    }
}

impl LogSumExp {
    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.acc += (x - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }
}

/// `log(1 - exp(x))` for `x <= 0`.
pub fn log1mexp(x: f64) -> f64 {
    debug_assert!(x <= 0.0, "log1mexp needs x <= 0, got {x}");
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `log(1 + exp(x))`.
pub fn log1pexp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 - exp(-exp(lz)))`, i.e. the log of the Gumbel survival function
/// `1 - F_phi(g)` with `lz = phi - g`. Finite for every finite `lz`.
pub fn log_gumbel_survival(lz: f64) -> f64 {
    if lz < -20.0 {
        // 1 - exp(-z) = z (1 - z/2 + ...)
        lz - 0.5 * lz.exp()
    } else if lz > 3.6 {
        (-(-lz.exp()).exp()).ln_1p()
    } else {
        (-(-lz.exp()).exp_m1()).ln()
    }
}

/// Gumbel survival `1 - exp(-exp(phi - g))` in linear space.
pub fn gumbel_survival(phi: f64, g: f64) -> f64 {
    -(-(phi - g).exp()).exp_m1()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Neumaier-compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    abs_sum: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs_sum += x.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Sum of the absolute values of all terms added so far.
    pub fn abs_total(&self) -> f64 {
        self.abs_sum
    }
}
