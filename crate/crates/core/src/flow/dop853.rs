//! Dormand-Prince 8(5,3) with Hairer's error norm and step control.

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.845_494_793_282_861E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.703_703_703_703_703_5E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.531_943_774_862_440_2E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.360_892_629_446_941_4;
const A95: f64 = -8.682_193_468_417_26E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.348_988_418_106_996E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.488_114_619_971_667_7;
const A105: f64 = -5.902_908_268_368_43E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.328_821_096_898_486E1;
const A109: f64 = -2.033_120_170_850_862_7E-2;
const A111: f64 = -9.371_424_300_859_873E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.149_787_010_746_927;
const A117: f64 = -1.852_006_565_999_696E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.046_764_471_898_219_6;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.053_449_546_673_725E1;
const A125: f64 = -2.000_872_058_224_862_5;
const A126: f64 = -1.795_893_186_311_88E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.858_998_277_135_023_5;
const A129: f64 = -8.872_856_933_530_63;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.801_203_960_010_585;
const B9: f64 = 3.111_643_669_578_199E-1;
const B10: f64 = -1.521_609_496_625_161E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 1.312_004_499_419_488E-2;
const ER6: f64 = -1.225_156_446_376_204_4;
const ER7: f64 = -4.957_589_496_572_502E-1;
const ER8: f64 = 1.664_377_182_454_986_4;
const ER9: f64 = -3.503_288_487_499_736_6E-1;
const ER10: f64 = 3.341_791_187_130_175E-1;
const ER11: f64 = 8.192_320_648_511_571E-2;
const ER12: f64 = -2.235_530_786_388_629_4E-2;

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 1.0 / 6.0;
const FAC_MAX: f64 = 3.0;

pub struct Outcome {
    pub samples: Vec<(f64, Vec<f64>)>,
    pub complete: bool,
    pub steps: usize,
    pub rejected: usize,
    /// max over accepted steps of the normalized error times the tolerance
    pub max_error: f64,
}

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Integrates y' = f(t, y) from t = 0, recording y at each time in `stops` (ascending, >= 0),
/// and at every accepted step when `every_step` is set.
pub fn integrate<F>(f: F, y0: &[f64], stops: &[f64], tol: f64, max_steps: usize, every_step: bool) -> Outcome
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let atol = tol;
    let rtol = tol;
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut out = Outcome { samples: vec![], complete: true, steps: 0, rejected: 0, max_error: 0.0 };
    let t_end = stops.last().copied().unwrap_or(0.0);
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 13];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut next_stop = 0;
    while next_stop < stops.len() && stops[next_stop] <= t {
        out.samples.push((stops[next_stop], y.clone()));
        next_stop += 1;
    }
    f(t, &y, &mut k[1]);
    let fnorm = k[1].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut h = (0.01 * tol.powf(0.125) / fnorm.max(1e-8)).min(t_end.max(1e-12));
    while next_stop < stops.len() {
        if out.steps >= max_steps {
            out.complete = false;
            break;
        }
        let target = stops[next_stop];
        let h_prop = h;
        let mut hit = false;
        if t + h >= target {
            h = target - t;
            hit = true;
        }
        let (k1, rest) = k.split_at_mut(2);
        let k1 = &k1[1];
        macro_rules! stage {
            ($dst:expr, $c:expr, $terms:expr) => {{
                axpy(&y, h, $terms, &mut tmp);
                f(t + $c * h, &tmp, $dst);
            }};
        }
        let (k2, rest) = rest.split_at_mut(1);
        let k2 = &mut k2[0];
        stage!(k2, C2, &[(A21, k1.as_slice())]);
        let (k3, rest) = rest.split_at_mut(1);
        let k3 = &mut k3[0];
        stage!(k3, C3, &[(A31, k1.as_slice()), (A32, k2.as_slice())]);
        let (k4, rest) = rest.split_at_mut(1);
        let k4 = &mut k4[0];
        stage!(k4, C4, &[(A41, k1.as_slice()), (A43, k3.as_slice())]);
        let (k5, rest) = rest.split_at_mut(1);
        let k5 = &mut k5[0];
        stage!(k5, C5, &[(A51, k1.as_slice()), (A53, k3.as_slice()), (A54, k4.as_slice())]);
        let (k6, rest) = rest.split_at_mut(1);
        let k6 = &mut k6[0];
        stage!(k6, C6, &[(A61, k1.as_slice()), (A64, k4.as_slice()), (A65, k5.as_slice())]);
        let (k7, rest) = rest.split_at_mut(1);
        let k7 = &mut k7[0];
        stage!(k7, C7, &[(A71, k1.as_slice()), (A74, k4.as_slice()), (A75, k5.as_slice()), (A76, k6.as_slice())]);
        let (k8, rest) = rest.split_at_mut(1);
        let k8 = &mut k8[0];
        stage!(
            k8,
            C8,
            &[(A81, k1.as_slice()), (A84, k4.as_slice()), (A85, k5.as_slice()), (A86, k6.as_slice()), (A87, k7.as_slice())]
        );
        let (k9, rest) = rest.split_at_mut(1);
        let k9 = &mut k9[0];
        stage!(
            k9,
            C9,
            &[
                (A91, k1.as_slice()),
                (A94, k4.as_slice()),
                (A95, k5.as_slice()),
                (A96, k6.as_slice()),
                (A97, k7.as_slice()),
                (A98, k8.as_slice())
            ]
        );
        let (k10, rest) = rest.split_at_mut(1);
        let k10 = &mut k10[0];
        stage!(
            k10,
            C10,
            &[
                (A101, k1.as_slice()),
                (A104, k4.as_slice()),
                (A105, k5.as_slice()),
                (A106, k6.as_slice()),
                (A107, k7.as_slice()),
                (A108, k8.as_slice()),
                (A109, k9.as_slice())
            ]
        );
        let (k11, rest) = rest.split_at_mut(1);
        let k11 = &mut k11[0];
        stage!(
            k11,
            C11,
            &[
                (A111, k1.as_slice()),
                (A114, k4.as_slice()),
                (A115, k5.as_slice()),
                (A116, k6.as_slice()),
                (A117, k7.as_slice()),
                (A118, k8.as_slice()),
                (A119, k9.as_slice()),
                (A1110, k10.as_slice())
            ]
        );
        let k12 = &mut rest[0];
        stage!(
            k12,
            1.0,
            &[
                (A121, k1.as_slice()),
                (A124, k4.as_slice()),
                (A125, k5.as_slice()),
                (A126, k6.as_slice()),
                (A127, k7.as_slice()),
                (A128, k8.as_slice()),
                (A129, k9.as_slice()),
                (A1210, k10.as_slice()),
                (A1211, k11.as_slice())
            ]
        );
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        for i in 0..n {
            let bsum = B1 * k1[i] + B6 * k6[i] + B7 * k7[i] + B8 * k8[i] + B9 * k9[i] + B10 * k10[i] + B11 * k11[i] + B12 * k12[i];
            ynew[i] = y[i] + h * bsum;
            let sk = atol + rtol * y[i].abs().max(ynew[i].abs());
            let e3 = bsum - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            err3 += (e3 / sk).powi(2);
            let e5 = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
            err5 += (e5 / sk).powi(2);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err5 * (1.0 / (n as f64 * deno)).sqrt();
        out.steps += 1;
        let fac = (err.powf(0.125) / SAFE).clamp(FAC_MIN, FAC_MAX);
        if err <= 1.0 {
            t = if hit { target } else { t + h };
            std::mem::swap(&mut y, &mut ynew);
            out.max_error = out.max_error.max(err * tol);
            let mut f1 = vec![0.0; n];
            f(t, &y, &mut f1);
            k[1] = f1;
            if every_step && !hit {
                out.samples.push((t, y.clone()));
            }
            while next_stop < stops.len() && stops[next_stop] <= t {
                out.samples.push((stops[next_stop], y.clone()));
                next_stop += 1;
            }
            h = if hit { h_prop.max(h / fac) } else { h / fac };
        } else {
            out.rejected += 1;
            h /= (err.powf(0.125) / SAFE).min(FAC_MAX);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_endpoint() {
        let f = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let out = integrate(f, &[1.0, 0.0], &[10.0], 1e-13, 100_000, false);
        let (t, y) = &out.samples[0];
        assert_eq!(*t, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn stops_hit_exactly_and_budget_flags() {
        let f = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = 3.0 * t * t;
        let out = integrate(f, &[0.0], &[0.0, 0.5, 2.0], 1e-12, 10_000, false);
        assert_eq!(out.samples.len(), 3);
        assert!((out.samples[2].1[0] - 8.0).abs() < 1e-10);
        let out = integrate(f, &[0.0], &[1e9], 1e-12, 3, false);
        assert!(!out.complete);
    }
}
