//! Dormand–Prince 8(5,3) with 7th-order dense output (Hairer, Nørsett &
//! Wanner, *Solving ODEs I*, the `DOP853` code), for autonomous systems on
//! fixed-size state arrays.

use crate::error::{Error, Result};

/// An autonomous vector field on `R^N`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, y: &[f64; N]) -> [f64; N];
}

impl<const N: usize, F: Fn(&[f64; N]) -> [f64; N]> OdeSystem<N> for F {
    fn rhs(&self, y: &[f64; N]) -> [f64; N] {
        self(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            h_max: 0.25,
            h_min: 1e-14,
            max_steps: 2_000_000,
        }
    }
}

/// Polynomial interpolant valid on one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    cont: [[f64; N]; 8],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; N] {
        self.cont[0]
    }

    pub fn end(&self) -> [f64; N] {
        self.eval(self.t1())
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h >= 0.0 { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= a && t <= b
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        std::array::from_fn(|i| {
            let conpar = c[4][i] + s * (c[5][i] + s1 * (c[6][i] + s * c[7][i]));
            c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * conpar)))
        })
    }
}

/// Adaptive stepper; integrates forward or backward depending on the sign of
/// the direction passed to [`Dop853::new`].
#[derive(Debug, Clone)]
pub struct Dop853<'a, S, const N: usize> {
    system: &'a S,
    control: StepControl,
    pub t: f64,
    pub y: [f64; N],
    k1: [f64; N],
    h: f64,
    direction: f64,
    steps: usize,
    evaluations: usize,
    last_rejected: bool,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

fn comb<const N: usize>(terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| terms.iter().map(|(c, k)| c * k[i]).sum())
}

impl<'a, S: OdeSystem<N>, const N: usize> Dop853<'a, S, N> {
    pub fn new(system: &'a S, t0: f64, y0: [f64; N], direction: f64, control: StepControl) -> Self {
        let k1 = system.rhs(&y0);
        let direction = if direction < 0.0 { -1.0 } else { 1.0 };
        let mut stepper = Self {
            system,
            control,
            t: t0,
            y: y0,
            k1,
            h: 0.0,
            direction,
            steps: 0,
            evaluations: 1,
            last_rejected: false,
        };
        stepper.h = stepper.initial_step();
        stepper
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn scale(&self, a: &[f64; N], b: &[f64; N], i: usize) -> f64 {
        self.control.atol + self.control.rtol * a[i].abs().max(b[i].abs())
    }

    fn initial_step(&mut self) -> f64 {
        let y = self.y;
        let f0 = self.k1;
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..N {
            let sk = self.control.atol + self.control.rtol * y[i].abs();
            dnf += (f0[i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.control.h_max);
        let y1 = axpy(&y, self.direction * h, &[(1.0, &f0)]);
        let f1 = self.system.rhs(&y1);
        self.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.control.atol + self.control.rtol * y[i].abs();
            der2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
        (100.0 * h).min(h1).min(self.control.h_max) * self.direction
    }

    /// Clamps the next step so that it does not pass `t_limit`.
    pub fn limit_step(&mut self, t_limit: f64) {
        let remaining = (t_limit - self.t) * self.direction;
        if remaining > 0.0 && self.h.abs() > remaining {
            self.h = remaining * self.direction;
        }
    }

    /// Takes one accepted step, retrying internally after rejections.
    pub fn step(&mut self) -> Result<DenseStep<N>> {
        loop {
            if self.steps >= self.control.max_steps {
                return Err(Error::StepBudget { steps: self.steps, t: self.t });
            }
            if self.h.abs() < self.control.h_min {
                let mut state = [0.0; 4];
                for (dst, src) in state.iter_mut().zip(self.y.iter()) {
                    *dst = *src;
                }
                return Err(Error::StepUnderflow { t: self.t, state });
            }
            self.steps += 1;
            let h = self.h;
            let (trial, err, stages) = self.attempt(h);
            let fac11 = err.powf(1.0 / 8.0);
            let fac = (1.0 / 6.0f64).max((1.0 / 0.333f64).min(fac11 / 0.9));
            let mut h_new = h / fac;
            if err <= 1.0 && trial.iter().all(|x| x.is_finite()) {
                if self.last_rejected {
                    h_new = if h_new.abs() < h.abs() { h_new } else { h };
                }
                self.last_rejected = false;
                let dense = self.dense(h, &trial, &stages);
                self.t += h;
                self.y = trial;
                self.k1 = stages.k13;
                self.h = h_new.abs().min(self.control.h_max) * self.direction;
                return Ok(dense);
            }
            self.last_rejected = true;
            let shrink = if err.is_finite() { (1.0 / 0.333f64).min(fac11 / 0.9) } else { 10.0 };
            self.h = h / shrink;
        }
    }

    /// Fixed-size step without error control; returns the new state.
    pub fn fixed_step(system: &'a S, y: &[f64; N], h: f64) -> [f64; N] {
        let mut tmp = Self {
            system,
            control: StepControl::default(),
            t: 0.0,
            y: *y,
            k1: system.rhs(y),
            h,
            direction: h.signum(),
            steps: 0,
            evaluations: 1,
            last_rejected: false,
        };
        tmp.attempt(h).0
    }

    fn attempt(&mut self, h: f64) -> ([f64; N], f64, Stages<N>) {
        let y = &self.y;
        let k1 = self.k1;
        let sys = self.system;
        let k2 = sys.rhs(&axpy(y, h, &[(A21, &k1)]));
        let k3 = sys.rhs(&axpy(y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = sys.rhs(&axpy(y, h, &[(A41, &k1), (A43, &k3)]));
        let k5 = sys.rhs(&axpy(y, h, &[(A51, &k1), (A53, &k3), (A54, &k4)]));
        let k6 = sys.rhs(&axpy(y, h, &[(A61, &k1), (A64, &k4), (A65, &k5)]));
        let k7 = sys.rhs(&axpy(y, h, &[(A71, &k1), (A74, &k4), (A75, &k5), (A76, &k6)]));
        let k8 = sys.rhs(&axpy(y, h, &[(A81, &k1), (A84, &k4), (A85, &k5), (A86, &k6), (A87, &k7)]));
        let k9 = sys.rhs(&axpy(
            y,
            h,
            &[(A91, &k1), (A94, &k4), (A95, &k5), (A96, &k6), (A97, &k7), (A98, &k8)],
        ));
        let k10 = sys.rhs(&axpy(
            y,
            h,
            &[(A101, &k1), (A104, &k4), (A105, &k5), (A106, &k6), (A107, &k7), (A108, &k8), (A109, &k9)],
        ));
        let k11 = sys.rhs(&axpy(
            y,
            h,
            &[
                (A111, &k1),
                (A114, &k4),
                (A115, &k5),
                (A116, &k6),
                (A117, &k7),
                (A118, &k8),
                (A119, &k9),
                (A1110, &k10),
            ],
        ));
        let k12 = sys.rhs(&axpy(
            y,
            h,
            &[
                (A121, &k1),
                (A124, &k4),
                (A125, &k5),
                (A126, &k6),
                (A127, &k7),
                (A128, &k8),
                (A129, &k9),
                (A1210, &k10),
                (A1211, &k11),
            ],
        ));
        let sum = comb(&[
            (B1, &k1),
            (B6, &k6),
            (B7, &k7),
            (B8, &k8),
            (B9, &k9),
            (B10, &k10),
            (B11, &k11),
            (B12, &k12),
        ]);
        let y_new = axpy(y, h, &[(1.0, &sum)]);
        self.evaluations += 11;

        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..N {
            let sk = self.scale(y, &y_new, i);
            let e2 = sum[i] - BHH1 * k1[i] - BHH2 * k9[i] - BHH3 * k12[i];
            err2 += (e2 / sk).powi(2);
            let e = ER1 * k1[i]
                + ER6 * k6[i]
                + ER7 * k7[i]
                + ER8 * k8[i]
                + ER9 * k9[i]
                + ER10 * k10[i]
                + ER11 * k11[i]
                + ER12 * k12[i];
            err += (e / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err * (1.0 / (deno * N as f64)).sqrt();
        let k13 = if err <= 1.0 { sys.rhs(&y_new) } else { [0.0; N] };
        self.evaluations += 1;
        (
            y_new,
            if err.is_nan() { f64::INFINITY } else { err },
            Stages {
                k1,
                k6,
                k7,
                k8,
                k9,
                k10,
                k11,
                k12,
                k13,
            },
        )
    }

    fn dense(&mut self, h: f64, y_new: &[f64; N], k: &Stages<N>) -> DenseStep<N> {
        let y = &self.y;
        let sys = self.system;
        let mut cont = [[0.0; N]; 8];
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k.k1[i] - ydiff;
            cont[0][i] = y[i];
            cont[1][i] = ydiff;
            cont[2][i] = bspl;
            cont[3][i] = ydiff - h * k.k13[i] - bspl;
        }
        let base = |d: &[f64; 8]| {
            comb(&[
                (d[0], &k.k1),
                (d[1], &k.k6),
                (d[2], &k.k7),
                (d[3], &k.k8),
                (d[4], &k.k9),
                (d[5], &k.k10),
                (d[6], &k.k11),
                (d[7], &k.k12),
            ])
        };
        let c4 = base(&[D41, D46, D47, D48, D49, D410, D411, D412]);
        let c5 = base(&[D51, D56, D57, D58, D59, D510, D511, D512]);
        let c6 = base(&[D61, D66, D67, D68, D69, D610, D611, D612]);
        let c7 = base(&[D71, D76, D77, D78, D79, D710, D711, D712]);
        let k14 = sys.rhs(&axpy(
            y,
            h,
            &[
                (A141, &k.k1),
                (A147, &k.k7),
                (A148, &k.k8),
                (A149, &k.k9),
                (A1410, &k.k10),
                (A1411, &k.k11),
                (A1412, &k.k12),
                (A1413, &k.k13),
            ],
        ));
        let k15 = sys.rhs(&axpy(
            y,
            h,
            &[
                (A151, &k.k1),
                (A156, &k.k6),
                (A157, &k.k7),
                (A158, &k.k8),
                (A1511, &k.k11),
                (A1512, &k.k12),
                (A1513, &k.k13),
                (A1514, &k14),
            ],
        ));
        let k16 = sys.rhs(&axpy(
            y,
            h,
            &[
                (A161, &k.k1),
                (A166, &k.k6),
                (A167, &k.k7),
                (A168, &k.k8),
                (A169, &k.k9),
                (A1613, &k.k13),
                (A1614, &k14),
                (A1615, &k15),
            ],
        ));
        self.evaluations += 3;
        let tail = |c: [f64; N], d: [f64; 4]| -> [f64; N] {
            std::array::from_fn(|i| h * (c[i] + d[0] * k.k13[i] + d[1] * k14[i] + d[2] * k15[i] + d[3] * k16[i]))
        };
        cont[4] = tail(c4, [D413, D414, D415, D416]);
        cont[5] = tail(c5, [D513, D514, D515, D516]);
        cont[6] = tail(c6, [D613, D614, D615, D616]);
        cont[7] = tail(c7, [D713, D714, D715, D716]);
        DenseStep { t0: self.t, h, cont }
    }
}

struct Stages<const N: usize> {
    k1: [f64; N],
    k6: [f64; N],
    k7: [f64; N],
    k8: [f64; N],
    k9: [f64; N],
    k10: [f64; N],
    k11: [f64; N],
    k12: [f64; N],
    k13: [f64; N],
}

/// Brent's method for a bracketed root of `f` on `[a, b]`.
pub fn brent(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, xtol: f64, max_iter: usize) -> Option<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Some(b)
}

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;
const A141: f64 = 5.61675022830479523392909219681E-2;
const A147: f64 = 2.53500210216624811088794765333E-1;
const A148: f64 = -2.46239037470802489917441475441E-1;
const A149: f64 = -1.24191423263816360469010140626E-1;
const A1410: f64 = 1.5329179827876569731206322685E-1;
const A1411: f64 = 8.20105229563468988491666602057E-3;
const A1412: f64 = 7.56789766054569976138603589584E-3;
const A1413: f64 = -8.298E-3;
const A151: f64 = 3.18346481635021405060768473261E-2;
const A156: f64 = 2.83009096723667755288322961402E-2;
const A157: f64 = 5.35419883074385676223797384372E-2;
const A158: f64 = -5.49237485713909884646569340306E-2;
const A1511: f64 = -1.08347328697249322858509316994E-4;
const A1512: f64 = 3.82571090835658412954920192323E-4;
const A1513: f64 = -3.40465008687404560802977114492E-4;
const A1514: f64 = 1.41312443674632500278074618366E-1;
const A161: f64 = -4.28896301583791923408573538692E-1;
const A166: f64 = -4.69762141536116384314449447206E0;
const A167: f64 = 7.68342119606259904184240953878E0;
const A168: f64 = 4.06898981839711007970213554331E0;
const A169: f64 = 3.56727187455281109270669543021E-1;
const A1613: f64 = -1.39902416515901462129418009734E-3;
const A1614: f64 = 2.9475147891527723389556272149E0;
const A1615: f64 = -9.15095847217987001081870187138E0;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const D41: f64 = -0.84289382761090128651353491142E+01;
const D46: f64 = 0.56671495351937776962531783590E+00;
const D47: f64 = -0.30689499459498916912797304727E+01;
const D48: f64 = 0.23846676565120698287728149680E+01;
const D49: f64 = 0.21170345824450282767155149946E+01;
const D410: f64 = -0.87139158377797299206789907490E+00;
const D411: f64 = 0.22404374302607882758541771650E+01;
const D412: f64 = 0.63157877876946881815570249290E+00;
const D413: f64 = -0.88990336451333310820698117400E-01;
const D414: f64 = 0.18148505520854727256656404962E+02;
const D415: f64 = -0.91946323924783554000451984436E+01;
const D416: f64 = -0.44360363875948939664310572000E+01;
const D51: f64 = 0.10427508642579134603413151009E+02;
const D56: f64 = 0.24228349177525818288430175319E+03;
const D57: f64 = 0.16520045171727028198505394887E+03;
const D58: f64 = -0.37454675472269020279518312152E+03;
const D59: f64 = -0.22113666853125306036270938578E+02;
const D510: f64 = 0.77334326684722638389603898808E+01;
const D511: f64 = -0.30674084731089398182061213626E+02;
const D512: f64 = -0.93321305264302278729567221706E+01;
const D513: f64 = 0.15697238121770843886131091075E+02;
const D514: f64 = -0.31139403219565177677282850411E+02;
const D515: f64 = -0.93529243588444783865713862664E+01;
const D516: f64 = 0.35816841486394083752465898540E+02;
const D61: f64 = 0.19985053242002433820987653617E+02;
const D66: f64 = -0.38703730874935176555105901742E+03;
const D67: f64 = -0.18917813819516756882830838328E+03;
const D68: f64 = 0.52780815920542364900561016686E+03;
const D69: f64 = -0.11573902539959630126141871134E+02;
const D610: f64 = 0.68812326946963000169666922661E+01;
const D611: f64 = -0.10006050966910838403183860980E+01;
const D612: f64 = 0.77771377980534432092869265740E+00;
const D613: f64 = -0.27782057523535084065932004339E+01;
const D614: f64 = -0.60196695231264120758267380846E+02;
const D615: f64 = 0.84320405506677161018159903784E+02;
const D616: f64 = 0.11992291136182789328035130030E+02;
const D71: f64 = -0.25693933462703749003312586129E+02;
const D76: f64 = -0.15418974869023643374053993627E+03;
const D77: f64 = -0.23152937917604549567536039109E+03;
const D78: f64 = 0.35763911791061412378285349910E+03;
const D79: f64 = 0.93405324183624310003907691704E+02;
const D710: f64 = -0.37458323136451633156875139351E+02;
const D711: f64 = 0.10409964950896230045147246184E+03;
const D712: f64 = 0.29840293426660503123344363579E+02;
const D713: f64 = -0.43533456590011143754432175058E+02;
const D714: f64 = 0.96324553959188282948394950600E+02;
const D715: f64 = -0.39177261675615439165231486172E+02;
const D716: f64 = -0.14972683625798562581422125276E+03;

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        let mut st = Dop853::new(&oscillator, 0.0, [1.0, 0.0], 1.0, StepControl::with_tolerance(1e-12));
        let t_end = 2.0 * std::f64::consts::PI;
        while st.t < t_end {
            st.limit_step(t_end);
            st.step().unwrap();
        }
        assert!((st.y[0] - 1.0).abs() < 1e-10 && st.y[1].abs() < 1e-10, "{:?}", st.y);
    }

    #[test]
    fn dense_output_tracks_exact_solution() {
        let mut st = Dop853::new(&oscillator, 0.0, [1.0, 0.0], 1.0, StepControl::with_tolerance(1e-12));
        for _ in 0..20 {
            let d = st.step().unwrap();
            for j in 0..=10 {
                let t = d.t0 + d.h * j as f64 / 10.0;
                let y = d.eval(t);
                assert!((y[0] - t.cos()).abs() < 1e-9, "t={t}");
                assert!((y[1] + t.sin()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn backward_direction() {
        let mut st = Dop853::new(&oscillator, 0.0, [1.0, 0.0], -1.0, StepControl::with_tolerance(1e-12));
        while st.t > -1.0 {
            st.limit_step(-1.0);
            let d = st.step().unwrap();
            assert!(d.h < 0.0);
        }
        assert!((st.y[0] - (-1.0f64).cos()).abs() < 1e-10);
        assert!((st.y[1] + (-1.0f64).sin()).abs() < 1e-10);
    }

    #[test]
    fn fixed_steps_show_eighth_order() {
        // Local error of a single step scales as h^9.
        let exact = |t: f64| [t.cos(), -t.sin()];
        let err = |h: f64| {
            let y = Dop853::fixed_step(&oscillator, &[1.0, 0.0], h);
            let e = exact(h);
            ((y[0] - e[0]).powi(2) + (y[1] - e[1]).powi(2)).sqrt()
        };
        let ratio = err(0.8) / err(0.4);
        assert!(ratio > 2f64.powi(8) && ratio < 2f64.powi(10), "ratio {ratio}");
    }

    #[test]
    fn brent_finds_root() {
        let r = brent(|x| x * x - 2.0, 0.0, 2.0, 1e-15, 100).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(brent(|x| x * x + 1.0, 0.0, 1.0, 1e-12, 50).is_none());
    }
}
