//! The scheme registry: named coefficient sets and the `family:name` parser.
//!
//! Coefficients are transcribed from their original publications and
//! certified by `order::check_*` in this crate's tests; the checker is the
//! authority over the transcription.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::{ButcherTableau, ImexTableau, RoswTableau};

/// A fully specified integration scheme as selected by name.
#[derive(Clone)]
pub enum Scheme {
    Erk(Arc<ButcherTableau>),
    Theta { theta: f64, label: String },
    Bdf { order: usize },
    ArkImex(Arc<ImexTableau>),
    Rosw(Arc<RoswTableau>),
}

impl Scheme {
    pub fn family(&self) -> &'static str {
        match self {
            Scheme::Erk(_) => "rk",
            Scheme::Theta { .. } => "theta",
            Scheme::Bdf { .. } => "bdf",
            Scheme::ArkImex(_) => "arkimex",
            Scheme::Rosw(_) => "rosw",
        }
    }

    pub fn name(&self) -> String {
        match self {
            Scheme::Erk(t) => t.name.clone(),
            Scheme::Theta { label, .. } => label.clone(),
            Scheme::Bdf { order } => format!("bdf{order}"),
            Scheme::ArkImex(t) => t.name.clone(),
            Scheme::Rosw(t) => t.name.clone(),
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Scheme::Erk(t) => t.order,
            Scheme::Theta { theta, .. } => {
                if *theta == 0.5 {
                    2
                } else {
                    1
                }
            }
            Scheme::Bdf { order } => *order,
            Scheme::ArkImex(t) => t.order,
            Scheme::Rosw(t) => t.order,
        }
    }

    pub fn embedded_order(&self) -> Option<usize> {
        match self {
            Scheme::Erk(t) => t.embedded_order,
            Scheme::Theta { .. } => None,
            Scheme::Bdf { .. } => None,
            Scheme::ArkImex(t) => t.embedded_order,
            Scheme::Rosw(t) => t.embedded_order,
        }
    }

    /// Whether the scheme produces a local error estimate the controller can
    /// use. BDF estimates through its predictor despite having no embedded
    /// weight vector.
    pub fn has_error_estimate(&self) -> bool {
        match self {
            Scheme::Bdf { .. } => true,
            Scheme::Theta { .. } => false,
            Scheme::Erk(t) => t.b_embedded.is_some(),
            Scheme::ArkImex(t) => t.b_embedded.is_some(),
            Scheme::Rosw(t) => t.b_embedded.is_some(),
        }
    }

    /// The order entering the controller exponent 1/(k+1): the lower of the
    /// pair for embedded schemes, the current order for BDF.
    pub fn control_order(&self) -> usize {
        match self {
            Scheme::Bdf { order } => *order,
            _ => self
                .embedded_order()
                .map(|e| e.min(self.order()))
                .unwrap_or_else(|| self.order()),
        }
    }
}

impl std::fmt::Debug for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.family(), self.name())
    }
}

// ---- explicit RK ----

pub fn erk_euler() -> ButcherTableau {
    ButcherTableau {
        name: "euler".into(),
        order: 1,
        embedded_order: None,
        a: DenseMatrix::zeros(1, 1),
        b: vec![1.0],
        c: vec![0.0],
        b_embedded: None,
        binterp: None,
    }
}

pub fn erk_rk4() -> ButcherTableau {
    ButcherTableau {
        name: "rk4".into(),
        order: 4,
        embedded_order: None,
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]),
        b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        c: vec![0.0, 0.5, 0.5, 1.0],
        b_embedded: None,
        binterp: None,
    }
}

/// Two-stage strong-stability-preserving pair (Heun arrangement).
pub fn erk_ssp_rk2() -> ButcherTableau {
    ButcherTableau {
        name: "ssp-rk2".into(),
        order: 2,
        embedded_order: None,
        a: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]),
        b: vec![0.5, 0.5],
        c: vec![0.0, 1.0],
        b_embedded: None,
        binterp: None,
    }
}

/// Three-stage third-order strong-stability-preserving scheme.
pub fn erk_ssp_rk3() -> ButcherTableau {
    ButcherTableau {
        name: "ssp-rk3".into(),
        order: 3,
        embedded_order: None,
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.25, 0.25, 0.0],
        ]),
        b: vec![1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        c: vec![0.0, 1.0, 0.5],
        b_embedded: None,
        binterp: None,
    }
}

/// Bogacki-Shampine 3(2) embedded pair.
pub fn erk_rk3bs() -> ButcherTableau {
    ButcherTableau {
        name: "rk3bs".into(),
        order: 3,
        embedded_order: Some(2),
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 0.0],
            vec![0.0, 0.75, 0.0, 0.0],
            vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
        ]),
        b: vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
        c: vec![0.0, 0.5, 0.75, 1.0],
        b_embedded: Some(vec![7.0 / 24.0, 0.25, 1.0 / 3.0, 0.125]),
        binterp: None,
    }
    .with_default_quadratic_binterp()
}

// ---- IMEX additive pairs ----

/// Ascher-Ruuth-Spiteri 2-stage 2(1) pair.
pub fn imex_ars122() -> ImexTableau {
    ImexTableau {
        name: "ars122".into(),
        order: 2,
        embedded_order: Some(1),
        a_explicit: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0]]),
        a_implicit: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.5]]),
        b_explicit: vec![0.0, 1.0],
        b_implicit: vec![0.0, 1.0],
        b_embedded: Some(vec![0.5, 0.5]),
        c: vec![0.0, 0.5],
        binterp: None,
    }
    .with_binterp(DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]))
}

/// Ascher-Ruuth-Spiteri 4-implicit-stage third-order pair (no embedded).
pub fn imex_ars443() -> ImexTableau {
    ImexTableau {
        name: "ars443".into(),
        order: 3,
        embedded_order: None,
        a_explicit: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.0, 0.0, 0.0],
            vec![11.0 / 18.0, 1.0 / 18.0, 0.0, 0.0, 0.0],
            vec![5.0 / 6.0, -5.0 / 6.0, 0.5, 0.0, 0.0],
            vec![0.25, 7.0 / 4.0, 0.75, -7.0 / 4.0, 0.0],
        ]),
        a_implicit: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.0, 0.0, 0.0],
            vec![0.0, 1.0 / 6.0, 0.5, 0.0, 0.0],
            vec![0.0, -0.5, 0.5, 0.5, 0.0],
            vec![0.0, 1.5, -1.5, 0.5, 0.5],
        ]),
        b_explicit: vec![0.25, 7.0 / 4.0, 0.75, -7.0 / 4.0, 0.0],
        b_implicit: vec![0.0, 1.5, -1.5, 0.5, 0.5],
        b_embedded: None,
        c: vec![0.0, 0.5, 2.0 / 3.0, 0.5, 1.0],
        binterp: None,
    }
}

/// Kennedy-Carpenter ARK3(2)4L[2]SA.
pub fn imex_ark3() -> ImexTableau {
    let g = 1767732205903.0 / 4055673282236.0;
    ImexTableau {
        name: "ark3".into(),
        order: 3,
        embedded_order: Some(2),
        a_explicit: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![2.0 * g, 0.0, 0.0, 0.0],
            vec![
                5535828885825.0 / 10492691773637.0,
                788022342437.0 / 10882634858940.0,
                0.0,
                0.0,
            ],
            vec![
                6485989280629.0 / 16251701735622.0,
                -4246266847089.0 / 9704473918619.0,
                10755448449292.0 / 10357097424841.0,
                0.0,
            ],
        ]),
        a_implicit: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![g, g, 0.0, 0.0],
            vec![
                2746238789719.0 / 10658868560708.0,
                -640167445237.0 / 6845629431997.0,
                g,
                0.0,
            ],
            vec![
                1471266399579.0 / 7840856788654.0,
                -4482444167858.0 / 7529755066697.0,
                11266239266428.0 / 11593286722821.0,
                g,
            ],
        ]),
        b_explicit: vec![
            1471266399579.0 / 7840856788654.0,
            -4482444167858.0 / 7529755066697.0,
            11266239266428.0 / 11593286722821.0,
            g,
        ],
        b_implicit: vec![
            1471266399579.0 / 7840856788654.0,
            -4482444167858.0 / 7529755066697.0,
            11266239266428.0 / 11593286722821.0,
            g,
        ],
        b_embedded: Some(vec![
            2756255671327.0 / 12835298489170.0,
            -10771552573575.0 / 22201958757719.0,
            9247589265047.0 / 10645013368117.0,
            2193209047091.0 / 5459859503100.0,
        ]),
        c: vec![0.0, 2.0 * g, 0.6, 1.0],
        binterp: None,
    }
    .with_binterp(DenseMatrix::from_rows(&[
        vec![
            4655552711362.0 / 22874653954995.0,
            -215264564351.0 / 13552729205753.0,
        ],
        vec![
            -18682724506714.0 / 9892148508045.0,
            17870216137069.0 / 13817060693119.0,
        ],
        vec![
            34259539580243.0 / 13192909600954.0,
            -28141676662227.0 / 17317692491321.0,
        ],
        vec![
            584795268549.0 / 6622622206610.0,
            2508943948391.0 / 7218656332882.0,
        ],
    ]))
}

/// Kennedy-Carpenter ARK4(3)6L[2]SA.
pub fn imex_ark4() -> ImexTableau {
    let g = 0.25;
    ImexTableau {
        name: "ark4".into(),
        order: 4,
        embedded_order: Some(3),
        a_explicit: DenseMatrix::from_rows(&[
            vec![0.0; 6],
            vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![13861.0 / 62500.0, 6889.0 / 62500.0, 0.0, 0.0, 0.0, 0.0],
            vec![
                -116923316275.0 / 2393684061468.0,
                -2731218467317.0 / 15368042101831.0,
                9408046702089.0 / 11113171139209.0,
                0.0,
                0.0,
                0.0,
            ],
            vec![
                -451086348788.0 / 2902428689909.0,
                -2682348792572.0 / 7519795681897.0,
                12662868775082.0 / 11960479115383.0,
                3355817975965.0 / 11060851509271.0,
                0.0,
                0.0,
            ],
            vec![
                647845179188.0 / 3216320057751.0,
                73281519250.0 / 8382639484533.0,
                552539513391.0 / 3454668386233.0,
                3354512671639.0 / 8306763924573.0,
                4040.0 / 17871.0,
                0.0,
            ],
        ]),
        a_implicit: DenseMatrix::from_rows(&[
            vec![0.0; 6],
            vec![g, g, 0.0, 0.0, 0.0, 0.0],
            vec![8611.0 / 62500.0, -1743.0 / 31250.0, g, 0.0, 0.0, 0.0],
            vec![
                5012029.0 / 34652500.0,
                -654441.0 / 2922500.0,
                174375.0 / 388108.0,
                g,
                0.0,
                0.0,
            ],
            vec![
                15267082809.0 / 155376265600.0,
                -71443401.0 / 120774400.0,
                730878875.0 / 902184768.0,
                2285395.0 / 8070912.0,
                g,
                0.0,
            ],
            vec![
                82889.0 / 524892.0,
                0.0,
                15625.0 / 83664.0,
                69875.0 / 102672.0,
                -2260.0 / 8211.0,
                g,
            ],
        ]),
        b_explicit: vec![
            82889.0 / 524892.0,
            0.0,
            15625.0 / 83664.0,
            69875.0 / 102672.0,
            -2260.0 / 8211.0,
            g,
        ],
        b_implicit: vec![
            82889.0 / 524892.0,
            0.0,
            15625.0 / 83664.0,
            69875.0 / 102672.0,
            -2260.0 / 8211.0,
            g,
        ],
        b_embedded: Some(vec![
            4586570599.0 / 29645900160.0,
            0.0,
            178811875.0 / 945068544.0,
            814220225.0 / 1159782912.0,
            -3700637.0 / 11593932.0,
            61727.0 / 225920.0,
        ]),
        c: vec![0.0, 0.5, 83.0 / 250.0, 31.0 / 50.0, 17.0 / 20.0, 1.0],
        binterp: None,
    }
}

// ---- Rosenbrock-W ----

/// Rang-Angermann 3-stage 3(2), for exact Jacobians only.
pub fn rosw_ra3pw() -> RoswTableau {
    let g = 7.8867513459481287e-01;
    RoswTableau {
        name: "ra3pw".into(),
        order: 3,
        embedded_order: Some(2),
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1.5773502691896257e+00, 0.0, 0.0],
            vec![0.5, 0.0, 0.0],
        ]),
        gamma: DenseMatrix::from_rows(&[
            vec![g, 0.0, 0.0],
            vec![-1.5773502691896257e+00, g, 0.0],
            vec![-6.7075317547305480e-01, -1.7075317547305482e-01, g],
        ]),
        b: vec![
            1.0566243270259355e-01,
            4.9038105676657971e-02,
            8.4529946162074843e-01,
        ],
        b_embedded: Some(vec![
            -1.7863279495408180e-01,
            1.0 / 3.0,
            8.4529946162074843e-01,
        ]),
        w_method: false,
        l_stable: false,
    }
}

/// Rang-Angermann 4-stage 3(2) W-method, L-stable and stiffly accurate.
pub fn rosw_ra34pw2() -> RoswTableau {
    let g = 4.3586652150845900e-01;
    RoswTableau {
        name: "ra34pw2".into(),
        order: 3,
        embedded_order: Some(2),
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![8.7173304301691801e-01, 0.0, 0.0, 0.0],
            vec![8.4457060015369423e-01, -1.1299064236484185e-01, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]),
        gamma: DenseMatrix::from_rows(&[
            vec![g, 0.0, 0.0, 0.0],
            vec![-8.7173304301691801e-01, g, 0.0, 0.0],
            vec![
                -9.0338057013044082e-01,
                5.4180672388095326e-02,
                g,
                0.0,
            ],
            vec![
                2.4212380706095346e-01,
                -1.2232505839045147e+00,
                5.4526025533510214e-01,
                g,
            ],
        ]),
        b: vec![
            2.4212380706095346e-01,
            -1.2232505839045147e+00,
            1.5452602553351020e+00,
            4.3586652150845900e-01,
        ],
        b_embedded: Some(vec![
            3.7810903145819369e-01,
            -9.6042292212423178e-02,
            0.5,
            2.1793326075422950e-01,
        ]),
        w_method: true,
        l_stable: true,
    }
}

/// Four-stage 3(2) with two embedded evaluations reused, stiffly accurate.
pub fn rosw_rodas3() -> RoswTableau {
    RoswTableau {
        name: "rodas3".into(),
        order: 3,
        embedded_order: Some(2),
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.75, -0.25, 0.5, 0.0],
        ]),
        gamma: DenseMatrix::from_rows(&[
            vec![0.5, 0.0, 0.0, 0.0],
            vec![1.0, 0.5, 0.0, 0.0],
            vec![-0.25, -0.25, 0.5, 0.0],
            vec![1.0 / 12.0, 1.0 / 12.0, -2.0 / 3.0, 0.5],
        ]),
        b: vec![5.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0, 0.5],
        b_embedded: Some(vec![0.75, -0.25, 0.5, 0.0]),
        w_method: false,
        l_stable: true,
    }
}

/// Sandu 3-stage 3(2), L-stable.
pub fn rosw_sandu3() -> RoswTableau {
    let g = 0.43586652150845899941601945119356;
    RoswTableau {
        name: "sandu3".into(),
        order: 3,
        embedded_order: Some(2),
        a: DenseMatrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![g, 0.0, 0.0],
            vec![g, 0.0, 0.0],
        ]),
        gamma: DenseMatrix::from_rows(&[
            vec![g, 0.0, 0.0],
            vec![-0.19294655696029095575009695436041, g, 0.0],
            vec![0.0, 1.74927148125794685173529749738960, g],
        ]),
        b: vec![
            -0.75457412385404315829818998646589,
            1.94100407061964420292840123379419,
            -0.18642994676560104463021124732829,
        ],
        b_embedded: Some(vec![
            -1.53358745784149585370766523913002,
            2.81745131148625772213931745457622,
            -0.28386385364476186843165221544619,
        ]),
        w_method: false,
        l_stable: true,
    }
}

/// The theta family written as a 2-stage tableau (for order checking and
/// documentation; the stepper solves it directly).
pub fn theta_as_rk(theta: f64) -> ButcherTableau {
    ButcherTableau {
        name: format!("theta({theta})"),
        order: if theta == 0.5 { 2 } else { 1 },
        embedded_order: None,
        a: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0 - theta, theta]]),
        b: vec![1.0 - theta, theta],
        c: vec![0.0, 1.0],
        b_embedded: None,
        binterp: None,
    }
}

fn erk_by_name(name: &str) -> Option<ButcherTableau> {
    match name {
        "euler" => Some(erk_euler()),
        "rk4" => Some(erk_rk4()),
        "ssp-rk2" => Some(erk_ssp_rk2()),
        "ssp-rk3" => Some(erk_ssp_rk3()),
        "rk3bs" => Some(erk_rk3bs()),
        _ => None,
    }
}

fn imex_by_name(name: &str) -> Option<ImexTableau> {
    match name {
        "ars122" => Some(imex_ars122()),
        "ars443" => Some(imex_ars443()),
        "ark3" => Some(imex_ark3()),
        "ark4" => Some(imex_ark4()),
        _ => None,
    }
}

fn rosw_by_name(name: &str) -> Option<RoswTableau> {
    match name {
        "ra3pw" => Some(rosw_ra3pw()),
        "ra34pw2" => Some(rosw_ra34pw2()),
        "rodas3" => Some(rosw_rodas3()),
        "sandu3" => Some(rosw_sandu3()),
        _ => None,
    }
}

fn theta_by_name(name: &str) -> Option<Scheme> {
    match name {
        "beuler" => Some(Scheme::Theta {
            theta: 1.0,
            label: "beuler".into(),
        }),
        "cn" => Some(Scheme::Theta {
            theta: 0.5,
            label: "cn".into(),
        }),
        _ => name.parse::<f64>().ok().and_then(|theta| {
            if theta > 0.0 && theta <= 1.0 {
                Some(Scheme::Theta {
                    theta,
                    label: format!("theta:{theta}"),
                })
            } else {
                None
            }
        }),
    }
}

fn bdf_by_name(name: &str) -> Option<Scheme> {
    let digits = name.strip_prefix("bdf").unwrap_or(name);
    digits
        .parse::<usize>()
        .ok()
        .filter(|o| (1..=6).contains(o))
        .map(|order| Scheme::Bdf { order })
}

/// Every fixed-name registry entry (theta appears as beuler and cn).
pub fn all_schemes() -> Vec<Scheme> {
    let mut out: Vec<Scheme> = Vec::new();
    for n in ["euler", "rk4", "ssp-rk2", "ssp-rk3", "rk3bs"] {
        out.push(Scheme::Erk(Arc::new(erk_by_name(n).unwrap())));
    }
    out.push(theta_by_name("beuler").unwrap());
    out.push(theta_by_name("cn").unwrap());
    for order in 1..=6 {
        out.push(Scheme::Bdf { order });
    }
    for n in ["ars122", "ars443", "ark3", "ark4"] {
        out.push(Scheme::ArkImex(Arc::new(imex_by_name(n).unwrap())));
    }
    for n in ["ra3pw", "ra34pw2", "rodas3", "sandu3"] {
        out.push(Scheme::Rosw(Arc::new(rosw_by_name(n).unwrap())));
    }
    out
}

fn known_names() -> Vec<String> {
    let mut names: Vec<String> = all_schemes()
        .iter()
        .map(|s| format!("{}:{}", s.family(), s.name()))
        .collect();
    names.extend(all_schemes().iter().map(|s| s.name()));
    names.push("theta:0.5".into());
    names
}

fn edit_distance(a: &str, b: &str) -> usize {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn unknown(name: &str) -> Error {
    let mut scored: Vec<(usize, String)> = known_names()
        .into_iter()
        .map(|n| (edit_distance(name, &n), n))
        .collect();
    scored.sort();
    scored.dedup_by(|a, b| a.1 == b.1);
    Error::UnknownScheme {
        name: name.to_string(),
        suggestions: scored.into_iter().take(4).map(|(_, n)| n).collect(),
    }
}

/// Fetch by bare name, searching all families.
pub fn registry_get(name: &str) -> Result<Scheme> {
    if let Some(t) = erk_by_name(name) {
        return Ok(Scheme::Erk(Arc::new(t)));
    }
    // Bare numerals stay ambiguous: theta values and bdf orders both need
    // their family prefix.
    if let Some(s) = theta_by_name(name).filter(|_| name.parse::<f64>().is_err()) {
        return Ok(s);
    }
    if name.starts_with("bdf") {
        if let Some(s) = bdf_by_name(name) {
            return Ok(s);
        }
    }
    if let Some(t) = imex_by_name(name) {
        return Ok(Scheme::ArkImex(Arc::new(t)));
    }
    if let Some(t) = rosw_by_name(name) {
        return Ok(Scheme::Rosw(Arc::new(t)));
    }
    Err(unknown(name))
}

/// Parse a `family:name` scheme id (bare names are searched everywhere).
/// Families: rk (alias erk), theta, bdf, arkimex, rosw.
pub fn parse_scheme(spec: &str) -> Result<Scheme> {
    let Some((family, name)) = spec.split_once(':') else {
        return registry_get(spec);
    };
    let found = match family {
        "rk" | "erk" => erk_by_name(name).map(|t| Scheme::Erk(Arc::new(t))),
        "theta" => theta_by_name(name),
        "bdf" => bdf_by_name(name),
        "arkimex" => imex_by_name(name).map(|t| Scheme::ArkImex(Arc::new(t))),
        "rosw" => rosw_by_name(name).map(|t| Scheme::Rosw(Arc::new(t))),
        _ => None,
    };
    found.ok_or_else(|| unknown(spec))
}
