//! Published numerical values of the two parameter columns and their
//! comparison with the values computed here.

use serde::{Deserialize, Serialize};

use crate::model::{self, AssumptionReport};
use crate::scenario::Scenario;
use crate::thresholds::{self, ThresholdError, ThresholdReport};

/// Tolerance for matching printed values.
pub const TABLE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Match,
    Discrepancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub quantity: String,
    pub published: f64,
    pub computed: f64,
    pub tolerance: f64,
    pub status: Status,
    /// Documented cause of a known mismatch between formula and printed value.
    pub known_discrepancy: Option<String>,
}

impl ReferenceCheck {
    fn new(quantity: &str, published: f64, computed: f64, known: Option<&str>) -> Self {
        let status = if (computed - published).abs() <= TABLE_TOLERANCE { Status::Match } else { Status::Discrepancy };
        ReferenceCheck {
            quantity: quantity.into(),
            published,
            computed,
            tolerance: TABLE_TOLERANCE,
            status,
            known_discrepancy: known.map(str::to_string),
        }
    }

    /// A match, or a mismatch that is explained.
    pub fn acceptable(&self) -> bool {
        self.status == Status::Match || self.known_discrepancy.is_some()
    }
}

/// Which published column a scenario corresponds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Extinction,
    Persistence,
}

impl Column {
    pub fn of(scenario: &Scenario) -> Option<Self> {
        let same = |name: &str| {
            let p = Scenario::preset(name).expect("preset exists");
            p.model == scenario.model && p.noise == scenario.noise && p.jumps == scenario.jumps && p.p == scenario.p
        };
        if same("table1-extinction") {
            Some(Column::Extinction)
        } else if same("table1-persistence") {
            Some(Column::Persistence)
        } else {
            None
        }
    }
}

fn moment_checks(a: &AssumptionReport, delta_known: Option<&str>, delta_printed: f64) -> Vec<ReferenceCheck> {
    vec![
        ReferenceCheck::new("M1_frak", 0.81, a.m1, None),
        ReferenceCheck::new("M2_frak", 1.4025, a.m2, None),
        ReferenceCheck::new("Sigma", 0.0724, a.sigma_max, None),
        ReferenceCheck::new("xi_max", 0.85, a.xi_max, None),
        ReferenceCheck::new("xi_min", -0.9, a.xi_min, None),
        ReferenceCheck::new("theta_tilde_p", 1.5301, a.theta_tilde, None),
        ReferenceCheck::new("theta_under_p", 1.2531, a.theta_under, None),
        ReferenceCheck::new("theta_p", 1.5301, a.theta_p, None),
        ReferenceCheck::new("varrho_p", 1.5301, a.varrho_p, None),
        ReferenceCheck::new("Delta_p", delta_printed, a.delta_p, delta_known),
        ReferenceCheck::new("M3_frak", 5.868, a.m3, None),
    ]
}

/// Values printed for the extinction column.
pub fn extinction_table(scenario: &Scenario) -> Result<Vec<ReferenceCheck>, ThresholdError> {
    let a = model::validate(&scenario.model, &scenario.noise, &scenario.jumps, scenario.p)?;
    let r: ThresholdReport = thresholds::classify(&scenario.model, &scenario.noise, &scenario.jumps, scenario.p)?;
    let mut out = moment_checks(&a, None, 0.13366);
    out.extend([
        ReferenceCheck::new("Upsilon", 0.9651, r.upsilon, None),
        ReferenceCheck::new("Upsilon_hat", 0.9275, r.upsilon_hat, None),
        ReferenceCheck::new("B_frak", 0.2122, r.frak_b, None),
        ReferenceCheck::new(
            "C_frak",
            0.026,
            r.frak_c,
            Some("printed value does not follow from (s2 s4)^2 / (2 (s2^2 + s4^2)) with s2 = 0.25, s4 = 0.13"),
        ),
        ReferenceCheck::new("D_frak", -0.4854, r.frak_d, None),
        ReferenceCheck::new("R0", 0.2122, r.r0, None),
        ReferenceCheck::new(
            "kappa",
            -0.2044,
            r.kappa,
            Some("follows the printed C_frak; the formula value of C_frak shifts kappa accordingly"),
        ),
        ReferenceCheck::new(
            "kappa_figure_caption",
            -0.2122,
            r.kappa,
            Some("the figure caption prints a third value for kappa, equal to B_frak and R0"),
        ),
    ]);
    Ok(out)
}

/// Values printed for the persistence column.
pub fn persistence_table(scenario: &Scenario) -> Result<Vec<ReferenceCheck>, ThresholdError> {
    let a = model::validate(&scenario.model, &scenario.noise, &scenario.jumps, scenario.p)?;
    let m = thresholds::m_values(&scenario.model, &scenario.noise, &scenario.jumps);
    let printed = [1.4725, 2.0935, 2.3338, 1.1433];
    let mut out =
        moment_checks(&a, Some("printed 1.13366 has a spurious leading digit; the formula gives 0.13366"), 1.13366);
    out.extend([
        ReferenceCheck::new(
            "M4_frak",
            0.378,
            a.m4,
            Some("printed value equals ln(1.85)^2 for the largest jump only; the max over components is attained at xi3 = -0.9"),
        ),
        ReferenceCheck::new("M1", printed[0], m[0], None),
        ReferenceCheck::new(
            "M2",
            printed[1],
            m[1],
            Some("printed value corresponds to xi2 = 0.8 of the extinction column"),
        ),
        ReferenceCheck::new(
            "M3",
            printed[2],
            m[2],
            Some("printed value uses mu_m = 0.9 and sigma3 = 0.25 of the extinction column"),
        ),
        ReferenceCheck::new(
            "M4",
            printed[3],
            m[3],
            Some("printed value uses mu_m = 0.9 and sigma4 = 0.13 of the extinction column"),
        ),
        ReferenceCheck::new(
            "R0_tilde_from_printed_M",
            1.0862,
            thresholds::r0_tilde_from(&scenario.model, &printed),
            None,
        ),
        ReferenceCheck::new(
            "R0_tilde",
            1.0862,
            thresholds::r0_tilde(&scenario.model, &scenario.noise, &scenario.jumps),
            Some("inherits the column mix-up in the printed M2, M3, M4"),
        ),
    ]);
    Ok(out)
}

pub fn table_for(scenario: &Scenario) -> Option<Result<Vec<ReferenceCheck>, ThresholdError>> {
    match Column::of(scenario)? {
        Column::Extinction => Some(extinction_table(scenario)),
        Column::Persistence => Some(persistence_table(scenario)),
    }
}
