//! Model constants, coefficient fields and the hypothesis checks built on
//! their bounds.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub k: f64,
    pub l: f64,
    pub lambda: f64,
}

/// The four chemotactic shifts that enter every bound.
///
/// `self_u = k chi1 / d3` is how strongly species u is drawn towards the
/// signal it produces itself, `cross_u = l chi1 / d3` how strongly it is drawn
/// towards the signal produced by v, and symmetrically for v.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shifts {
    pub self_u: f64,
    pub cross_u: f64,
    pub cross_v: f64,
    pub self_v: f64,
}

impl ModelConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("k", self.k),
            ("l", self.l),
            ("lambda", self.lambda),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be finite")));
            }
        }
        for (name, value) in [("d1", self.d1), ("d2", self.d2), ("d3", self.d3)] {
            if value <= 0.0 {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {value}")));
            }
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        for (name, value) in [("chi1", self.chi1), ("chi2", self.chi2), ("k", self.k), ("l", self.l)] {
            if value < 0.0 {
                return Err(Error::InvalidSpec(format!("{name} must be nonnegative, got {value}")));
            }
        }
        Ok(())
    }

    pub fn shifts(&self) -> Shifts {
        Shifts {
            self_u: self.k * self.chi1 / self.d3,
            cross_u: self.l * self.chi1 / self.d3,
            cross_v: self.k * self.chi2 / self.d3,
            self_v: self.l * self.chi2 / self.d3,
        }
    }

    pub fn chemotaxis_free(&self) -> bool {
        self.chi1 == 0.0 && self.chi2 == 0.0
    }
}

/// `c(t, x) = mean + time_amp sin(time_freq t + time_phase) + space_amp cos(space_mode pi x / L)`
/// together with declared bounds `inf <= c <= sup`.
///
/// Spatial arguments are passed as the fraction `xi = x / L` of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub mean: f64,
    pub time_amp: f64,
    pub time_freq: f64,
    pub time_phase: f64,
    pub space_amp: f64,
    pub space_mode: u32,
    pub inf: f64,
    pub sup: f64,
}

impl CoefficientField {
    /// Sinusoidal field with bounds taken from the conservative envelope.
    pub fn new(mean: f64, time_amp: f64, time_freq: f64, time_phase: f64, space_amp: f64, space_mode: u32) -> Self {
        let spread = time_amp.abs() + space_amp.abs();
        CoefficientField {
            mean,
            time_amp,
            time_freq,
            time_phase,
            space_amp,
            space_mode,
            inf: mean - spread,
            sup: mean + spread,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0, 0.0, 0.0, 0)
    }

    /// A field known only through its bounds. It is realised as the constant
    /// midpoint, and every bound-based computation uses `[inf, sup]`.
    pub fn band(inf: f64, sup: f64) -> Self {
        CoefficientField {
            inf,
            sup,
            ..Self::constant(0.5 * (inf + sup))
        }
    }

    pub fn periodic(mean: f64, amp: f64, freq: f64) -> Self {
        Self::new(mean, amp, freq, 0.0, 0.0, 0)
    }

    pub fn with_bounds(mut self, inf: f64, sup: f64) -> Self {
        self.inf = inf;
        self.sup = sup;
        self
    }

    pub fn time_term(&self, t: f64) -> f64 {
        if self.time_amp == 0.0 {
            0.0
        } else {
            self.time_amp * (self.time_freq * t + self.time_phase).sin()
        }
    }

    pub fn space_term(&self, xi: f64) -> f64 {
        if self.space_amp == 0.0 {
            0.0
        } else {
            self.space_amp * (self.space_mode as f64 * PI * xi).cos()
        }
    }

    pub fn value(&self, t: f64, xi: f64) -> f64 {
        self.mean + self.time_term(t) + self.space_term(xi)
    }

    pub fn is_time_constant(&self) -> bool {
        self.time_amp == 0.0 || self.time_freq == 0.0
    }

    pub fn is_space_independent(&self) -> bool {
        self.space_amp == 0.0 || self.space_mode == 0
    }

    pub fn period(&self) -> Option<f64> {
        if self.is_time_constant() {
            None
        } else {
            Some(2.0 * PI / self.time_freq.abs())
        }
    }

    fn space_range(&self) -> (f64, f64) {
        if self.space_mode == 0 {
            (self.space_amp, self.space_amp)
        } else {
            (-self.space_amp.abs(), self.space_amp.abs())
        }
    }

    fn time_range(&self) -> (f64, f64) {
        if self.time_freq == 0.0 {
            let c = self.time_term(0.0);
            (c, c)
        } else {
            (-self.time_amp.abs(), self.time_amp.abs())
        }
    }

    /// Exact range of `c` over all times and the whole domain.
    pub fn exact_range(&self) -> (f64, f64) {
        let (tl, th) = self.time_range();
        let (sl, sh) = self.space_range();
        (self.mean + tl + sl, self.mean + th + sh)
    }

    pub fn envelope(&self) -> (f64, f64) {
        let spread = self.time_amp.abs() + self.space_amp.abs();
        (self.mean - spread, self.mean + spread)
    }

    /// Infimum over the domain at a fixed time.
    ///
    /// A field that does not vary in time is described by its declared bounds,
    /// so those are returned directly.
    pub fn inf_at(&self, t: f64) -> f64 {
        if self.is_time_constant() {
            self.inf
        } else {
            self.mean + self.time_term(t) + self.space_range().0
        }
    }

    pub fn sup_at(&self, t: f64) -> f64 {
        if self.is_time_constant() {
            self.sup
        } else {
            self.mean + self.time_term(t) + self.space_range().1
        }
    }

    /// Bounds that touch the envelope exactly are only met up to roundoff,
    /// since the terms are summed in a different order than the envelope.
    fn roundoff_slack(&self) -> f64 {
        1e-12 * (self.mean.abs() + self.time_amp.abs() + self.space_amp.abs())
    }

    pub(crate) fn check(&self, name: &str, allow_zero: bool) -> Result<()> {
        let values = [
            self.mean,
            self.time_amp,
            self.time_freq,
            self.time_phase,
            self.space_amp,
            self.inf,
            self.sup,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!("{name}: all parameters must be finite")));
        }
        if allow_zero {
            if self.inf < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "{name}: inf must be nonnegative, got {}",
                    self.inf
                )));
            }
        } else if self.inf <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "{name}: inf must be positive, got {}",
                self.inf
            )));
        }
        if self.inf > self.sup {
            return Err(Error::InvalidSpec(format!(
                "{name}: inf {} exceeds sup {}",
                self.inf, self.sup
            )));
        }
        let (lo, hi) = self.exact_range();
        let slack = self.roundoff_slack();
        if lo < self.inf - slack || hi > self.sup + slack {
            return Err(Error::InvalidSpec(format!(
                "{name}: values range over [{lo}, {hi}] but declared bounds are [{}, {}]",
                self.inf, self.sup
            )));
        }
        Ok(())
    }
}

/// Result of sampling a field against its declared bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldCheck {
    pub envelope: (f64, f64),
    pub samples: usize,
}

/// Samples `c` on a tensor grid over one temporal period and the unit domain
/// and fails on the sample furthest outside `[inf, sup]`, ignoring
/// roundoff-sized excursions.
pub fn validate_field_bounds(field: &CoefficientField, samples_t: usize, samples_x: usize) -> Result<FieldCheck> {
    if samples_t < 2 || samples_x < 2 {
        return Err(Error::InvalidSpec(
            "at least two samples are needed in each direction".into(),
        ));
    }
    let t_span = if field.time_freq != 0.0 {
        2.0 * PI / field.time_freq.abs()
    } else {
        1.0
    };
    let slack = field.roundoff_slack();
    let mut worst: Option<(f64, f64, f64, f64)> = None;
    for i in 0..samples_t {
        let t = t_span * i as f64 / (samples_t - 1) as f64;
        for j in 0..samples_x {
            let xi = j as f64 / (samples_x - 1) as f64;
            let c = field.value(t, xi);
            let excess = (field.inf - c).max(c - field.sup);
            if excess > slack && worst.is_none_or(|w| excess > w.3) {
                worst = Some((t, xi, c, excess));
            }
        }
    }
    match worst {
        Some((t, x, value, _)) => Err(Error::BoundsViolation {
            t,
            x,
            value,
            inf: field.inf,
            sup: field.sup,
        }),
        None => Ok(FieldCheck {
            envelope: field.envelope(),
            samples: samples_t * samples_x,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub constants: ModelConstants,
    pub a0: CoefficientField,
    pub a1: CoefficientField,
    pub a2: CoefficientField,
    pub b0: CoefficientField,
    pub b1: CoefficientField,
    pub b2: CoefficientField,
}

/// Ultimate upper bounds for the two species. `None` marks a bound whose
/// guarding condition fails.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UltimateBounds {
    /// Bounds that treat each species against its own self-attraction.
    pub diagonal_u: Option<f64>,
    pub diagonal_v: Option<f64>,
    /// Bounds that also account for cross-attraction between the species.
    pub coupled_u: Option<f64>,
    pub coupled_v: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// Self-limitation beats self-attraction and competition beats
    /// cross-attraction, species by species.
    pub boundedness_diagonal: bool,
    /// Self-limitation beats attraction in the coupled 2x2 sense.
    pub boundedness_coupled: bool,
    pub persistence_diagonal: bool,
    pub persistence_coupled: bool,
    /// Licenses the diagonal attracting rectangle.
    pub rectangle_diagonal: bool,
    /// Licenses the coupled attracting rectangle.
    pub rectangle_coupled: bool,
    /// Global stability for space-independent coefficients; `None` when the
    /// coefficients depend on space.
    pub homogeneous_stability: Option<bool>,
    /// Persistence of the signal-free competition system.
    pub lv_persistence: bool,
    pub bounds: UltimateBounds,
    /// Left side minus right side of every inequality that could be evaluated.
    pub margins: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn fields(&self) -> [(&'static str, &CoefficientField); 6] {
        [
            ("a0", &self.a0),
            ("a1", &self.a1),
            ("a2", &self.a2),
            ("b0", &self.b0),
            ("b1", &self.b1),
            ("b2", &self.b2),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        for (name, field) in self.fields() {
            field.check(name, matches!(name, "a2" | "b1"))?;
        }
        Ok(())
    }

    pub fn shifts(&self) -> Shifts {
        self.constants.shifts()
    }

    pub fn is_space_independent(&self) -> bool {
        self.fields().iter().all(|(_, f)| f.is_space_independent())
    }

    pub fn is_time_constant(&self) -> bool {
        self.fields().iter().all(|(_, f)| f.is_time_constant())
    }

    pub fn is_constant(&self) -> bool {
        self.fields().iter().all(|(_, f)| f.inf == f.sup)
    }

    /// Longest period among the time-varying fields.
    pub fn period(&self) -> Option<f64> {
        self.fields()
            .iter()
            .filter_map(|(_, f)| f.period())
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
    }

    pub fn derive_bounds(&self) -> Result<UltimateBounds> {
        self.validate()?;
        Ok(self.bounds_unchecked())
    }

    pub(crate) fn bounds_unchecked(&self) -> UltimateBounds {
        let s = self.shifts();
        let a1 = self.a1.inf - s.self_u;
        let b2 = self.b2.inf - s.self_v;
        let diagonal_u = (a1 > 0.0).then(|| self.a0.sup / a1);
        let diagonal_v = (b2 > 0.0).then(|| self.b0.sup / b2);
        let det = a1 * b2 - s.cross_v * s.cross_u;
        let coupled = a1 > 0.0 && b2 > 0.0 && det > 0.0;
        let coupled_u = coupled.then(|| (self.a0.sup * b2 + s.cross_u * self.b0.sup) / det);
        let coupled_v = coupled.then(|| (self.b0.sup * a1 + s.cross_v * self.a0.sup) / det);
        UltimateBounds {
            diagonal_u,
            diagonal_v,
            coupled_u,
            coupled_v,
        }
    }

    /// Left side minus right side of the signal-free persistence condition.
    ///
    /// Written so that the result coincides bitwise with the diagonal
    /// rectangle margins once the chemotactic shifts vanish.
    pub fn lv_persistence_margins(&self) -> (f64, f64) {
        (
            self.a0.inf - self.a2.sup * (self.b0.sup / self.b2.inf),
            self.b0.inf - self.b1.sup * (self.a0.sup / self.a1.inf),
        )
    }

    pub fn check_hypotheses(&self) -> Result<HypothesisReport> {
        self.validate()?;
        let s = self.shifts();
        let bounds = self.bounds_unchecked();
        let mut margins = BTreeMap::new();
        let mut put = |key: &str, value: f64| {
            margins.insert(key.to_string(), value);
            value
        };

        let a1 = put("boundedness.a1_self", self.a1.inf - s.self_u);
        let b2 = put("boundedness.b2_self", self.b2.inf - s.self_v);
        let a2 = put("boundedness.a2_cross", self.a2.inf - s.cross_u);
        let b1 = put("boundedness.b1_cross", self.b1.inf - s.cross_v);
        let coupling = put("boundedness.coupling", a1 * b2 - s.cross_v * s.cross_u);
        let boundedness_diagonal = a1 > 0.0 && a2 >= 0.0 && b1 >= 0.0 && b2 > 0.0;
        let boundedness_coupled = a1 > 0.0 && b2 > 0.0 && coupling > 0.0;

        let mut persistence_diagonal = false;
        let mut rectangle_diagonal = false;
        if let (Some(au), Some(av)) = (bounds.diagonal_u, bounds.diagonal_v) {
            let pu = put("persistence_diagonal.u", self.a0.inf - self.a2.sup * av);
            let pv = put("persistence_diagonal.v", self.b0.inf - self.b1.sup * au);
            persistence_diagonal = boundedness_diagonal && pu > 0.0 && pv > 0.0;
            let ru = put("rectangle_diagonal.u", self.a0.inf - (self.a2.sup * av + s.self_u * au));
            let rv = put("rectangle_diagonal.v", self.b0.inf - (self.b1.sup * au + s.self_v * av));
            rectangle_diagonal = persistence_diagonal && ru > 0.0 && rv > 0.0;
        }

        let mut persistence_coupled = false;
        let mut rectangle_coupled = false;
        if let (Some(bu), Some(bv)) = (bounds.coupled_u, bounds.coupled_v) {
            let pu = put(
                "persistence_coupled.u",
                self.a0.inf - ((self.a2.sup - s.cross_u).max(0.0) + s.cross_u) * bv,
            );
            let pv = put(
                "persistence_coupled.v",
                self.b0.inf - ((self.b1.sup - s.cross_v).max(0.0) + s.cross_v) * bu,
            );
            persistence_coupled = boundedness_coupled && pu > 0.0 && pv > 0.0;
            let ru = put(
                "rectangle_coupled.u",
                self.a0.inf - ((self.a2.sup + s.cross_u) * bv + s.self_u * bu),
            );
            let rv = put(
                "rectangle_coupled.v",
                self.b0.inf - ((self.b1.sup + s.cross_v) * bu + s.self_v * bv),
            );
            rectangle_coupled = persistence_coupled && ru > 0.0 && rv > 0.0;
        }

        let (lu, lv) = self.lv_persistence_margins();
        put("lv_persistence.u", lu);
        put("lv_persistence.v", lv);
        let lv_persistence = lu > 0.0 && lv > 0.0;

        let homogeneous_stability = if self.is_space_independent() {
            let c = &self.constants;
            let total = c.chi1 + c.chi2;
            let mu = put(
                "homogeneous_stability.u",
                inf_of_difference(&self.a1, &self.b1) - 2.0 * c.k / c.d3 * total,
            );
            let mv = put(
                "homogeneous_stability.v",
                inf_of_difference(&self.b2, &self.a2) - 2.0 * c.l / c.d3 * total,
            );
            Some(lv_persistence && mu > 0.0 && mv > 0.0)
        } else {
            None
        };

        Ok(HypothesisReport {
            boundedness_diagonal,
            boundedness_coupled,
            persistence_diagonal,
            persistence_coupled,
            rectangle_diagonal,
            rectangle_coupled,
            homogeneous_stability,
            lv_persistence,
            bounds,
            margins,
        })
    }
}

/// Lower bound of `inf_t (f(t) - g(t))` for space-independent fields.
///
/// Exact when both sinusoids share a frequency; otherwise the amplitudes are
/// subtracted independently. A field constant in time contributes its
/// declared bound.
pub fn inf_of_difference(f: &CoefficientField, g: &CoefficientField) -> f64 {
    let (f_base, f_amp, f_phase, f_freq) = time_profile(f, f.inf);
    let (g_base, g_amp, g_phase, g_freq) = time_profile(g, g.sup);
    let base = f_base - g_base;
    if f_amp == 0.0 || g_amp == 0.0 {
        return base - f_amp.abs() - g_amp.abs();
    }
    if f_freq == g_freq {
        // f_amp sin(wt + p) - g_amp sin(wt + q) is one sinusoid
        let re = f_amp * f_phase.cos() - g_amp * g_phase.cos();
        let im = f_amp * f_phase.sin() - g_amp * g_phase.sin();
        base - re.hypot(im)
    } else if f_freq == -g_freq {
        // g_amp sin(-wt + q) = -g_amp sin(wt - q)
        let re = f_amp * f_phase.cos() + g_amp * (-g_phase).cos();
        let im = f_amp * f_phase.sin() + g_amp * (-g_phase).sin();
        base - re.hypot(im)
    } else {
        base - f_amp.abs() - g_amp.abs()
    }
}

/// Space-independent part of a field as `base + amp sin(freq t + phase)`,
/// with the declared bound standing in for fields that are constant in time.
fn time_profile(field: &CoefficientField, declared: f64) -> (f64, f64, f64, f64) {
    let space = if field.space_mode == 0 { field.space_amp } else { 0.0 };
    if field.is_time_constant() {
        (declared, 0.0, 0.0, 0.0)
    } else {
        (field.mean + space, field.time_amp, field.time_phase, field.time_freq)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn unit_constants(chi: f64) -> ModelConstants {
        ModelConstants {
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
            chi1: chi,
            chi2: chi,
            k: 1.0,
            l: 1.0,
            lambda: 1.0,
        }
    }

    pub fn symmetric(chi: f64, a0: f64, a1: f64, a2: f64) -> ModelSpec {
        ModelSpec {
            constants: unit_constants(chi),
            a0: CoefficientField::constant(a0),
            a1: CoefficientField::constant(a1),
            a2: CoefficientField::constant(a2),
            b0: CoefficientField::constant(a0),
            b1: CoefficientField::constant(a2),
            b2: CoefficientField::constant(a1),
        }
    }

    #[test]
    fn diagonal_bounds_with_weak_chemotaxis() {
        let b = symmetric(0.1, 3.0, 2.0, 0.5).derive_bounds().unwrap();
        assert_eq!(b.diagonal_u, Some(3.0 / 1.9));
        assert_eq!(b.diagonal_v, Some(3.0 / 1.9));
        let coupled = (3.0 * 1.9 + 0.1 * 3.0) / (1.9 * 1.9 - 0.01);
        assert!((b.coupled_u.unwrap() - 6.0 / 3.6).abs() < 1e-14);
        assert_eq!(b.coupled_u, Some(coupled));
        assert_eq!(b.coupled_v, b.coupled_u);
    }

    #[test]
    fn logistic_carrying_capacity_without_chemotaxis() {
        let b = symmetric(0.0, 3.0, 2.0, 0.0).derive_bounds().unwrap();
        assert_eq!(b.diagonal_u, Some(1.5));
        assert_eq!(b.coupled_u, Some(1.5));
    }

    #[test]
    fn bounds_are_undefined_when_attraction_dominates() {
        let mut spec = symmetric(25.0, 3.0, 2.0, 0.5);
        spec.constants.chi2 = 0.0;
        let b = spec.derive_bounds().unwrap();
        assert_eq!(b.diagonal_u, None);
        assert!(b.diagonal_v.is_some());
        assert_eq!(b.coupled_u, None);
        let r = spec.check_hypotheses().unwrap();
        assert!(!r.boundedness_diagonal);
        assert!(!r.boundedness_coupled);
        assert!(!r.persistence_diagonal && !r.rectangle_diagonal);
        assert_eq!(r.margins["boundedness.a1_self"], 2.0 - 25.0);
    }

    #[test]
    fn running_example_satisfies_every_hypothesis() {
        let r = symmetric(0.1, 3.0, 2.0, 0.5).check_hypotheses().unwrap();
        assert!(r.boundedness_diagonal && r.boundedness_coupled);
        assert!(r.persistence_diagonal && r.persistence_coupled);
        assert!(r.rectangle_diagonal && r.rectangle_coupled);
        assert!(r.lv_persistence);
        assert_eq!(r.homogeneous_stability, Some(true));
        let rhs = 0.5 * 3.0 / 1.9 + 0.1 * 3.0 / 1.9;
        assert!((r.margins["rectangle_diagonal.u"] - (3.0 - rhs)).abs() < 1e-15);
        assert!((rhs - 0.6 * 1.578947).abs() < 1e-6);
    }

    #[test]
    fn periodic_homogeneous_example() {
        let mut spec = symmetric(0.05, 3.0, 2.0, 0.5);
        spec.a0 = CoefficientField::periodic(3.0, 0.5, 1.0);
        spec.b0 = spec.a0;
        let r = spec.check_hypotheses().unwrap();
        assert_eq!(r.homogeneous_stability, Some(true));
        assert!((r.margins["homogeneous_stability.u"] - (1.5 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_check_is_not_applicable_in_heterogeneous_media() {
        let mut spec = symmetric(0.05, 3.0, 2.0, 0.5);
        spec.a1 = CoefficientField::new(2.0, 0.0, 0.0, 0.0, 0.1, 1);
        let r = spec.check_hypotheses().unwrap();
        assert_eq!(r.homogeneous_stability, None);
        assert!(!r.margins.contains_key("homogeneous_stability.u"));
    }

    #[test]
    fn phasor_infimum_is_exact_for_matching_frequencies() {
        let f = CoefficientField::new(2.0, 0.3, 1.0, 0.0, 0.0, 0);
        let g = CoefficientField::new(0.5, 0.3, 1.0, PI, 0.0, 0);
        // g = 0.5 - 0.3 sin t, so f - g = 1.5 + 0.6 sin t
        assert!((inf_of_difference(&f, &g) - 0.9).abs() < 1e-14);
        let same = CoefficientField::new(0.5, 0.3, 1.0, 0.0, 0.0, 0);
        assert!((inf_of_difference(&f, &same) - 1.5).abs() < 1e-14);
        let other = CoefficientField::new(0.5, 0.3, 2.0, 0.0, 0.0, 0);
        assert!((inf_of_difference(&f, &other) - 0.9).abs() < 1e-14);
    }

    #[test]
    fn signal_free_rectangle_hypotheses_match_lv_persistence() {
        let spec = symmetric(0.0, 3.0, 2.0, 1.0);
        let r = spec.check_hypotheses().unwrap();
        assert_eq!(r.rectangle_diagonal, r.lv_persistence);
        assert_eq!(r.margins["rectangle_diagonal.u"], r.margins["lv_persistence.u"]);
    }

    #[test]
    fn field_bounds_validation() {
        let f = CoefficientField::new(3.0, 0.5, 1.0, 0.0, 0.0, 0).with_bounds(2.5, 3.5);
        assert!(validate_field_bounds(&f, 33, 5).is_ok());

        let tight = f.with_bounds(2.6, 3.5);
        match validate_field_bounds(&tight, 33, 5) {
            Err(Error::BoundsViolation { t, value, .. }) => {
                assert!((value - 2.5).abs() < 1e-12);
                assert!((t - 1.5 * PI).abs() < 1e-12);
            }
            other => panic!("expected a bounds violation, got {other:?}"),
        }

        let g = CoefficientField::new(2.0, 0.1, 1.0, 0.0, 0.1, 1).with_bounds(1.8, 2.2);
        let check = validate_field_bounds(&g, 17, 9).unwrap();
        assert!((check.envelope.0 - 1.8).abs() < 1e-15);
        assert!((check.envelope.1 - 2.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = symmetric(0.1, 3.0, 2.0, 0.5);
        spec.constants.lambda = 0.0;
        assert!(matches!(spec.derive_bounds(), Err(Error::InvalidSpec(_))));

        let mut spec = symmetric(0.1, 3.0, 2.0, 0.5);
        spec.constants.chi1 = -0.1;
        assert!(matches!(spec.check_hypotheses(), Err(Error::InvalidSpec(_))));

        let mut spec = symmetric(0.1, 3.0, 2.0, 0.5);
        spec.a0 = CoefficientField::new(3.0, 0.5, 1.0, 0.0, 0.0, 0).with_bounds(2.6, 3.5);
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));

        let mut spec = symmetric(0.1, 3.0, 2.0, 0.5);
        spec.a1 = CoefficientField::constant(0.0);
        assert!(spec.validate().is_err());
        // competition may vanish, growth and self-limitation may not
        assert!(symmetric(0.0, 3.0, 2.0, 0.0).validate().is_ok());
    }

    #[test]
    fn mode_zero_is_a_constant_shift() {
        let f = CoefficientField::new(2.0, 0.0, 0.0, 0.0, 0.3, 0);
        assert!(f.is_space_independent());
        assert_eq!(f.exact_range(), (2.3, 2.3));
        assert_eq!(f.value(1.0, 0.7), 2.3);
    }
}
