//! Initial state from a fundamental-frequency load flow.
//!
//! Converter buses are PV buses delivering their active power setpoint at
//! their voltage setpoint. The first machine's internal EMF is the slack
//! node at angle zero; without a machine the first converter takes that
//! role. Every other bus carries no injection. The phasor solution is then
//! mapped onto the αβ states at t = 0 and the controller states are set to
//! the values that hold that operating point.

use nalgebra::{Complex, DMatrix, DVector};

use super::FlatSystem;
use crate::controllers::outer::OuterKind;
use crate::controllers::power::instantaneous_power;
use crate::converter::{raw_dc_demand, ConverterParams};
use crate::error::ConfigError;
use crate::frames::park;
use crate::Vec2;

type C64 = Complex<f64>;

const TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 50;

fn phasor_to_ab(z: C64) -> Vec2 {
    [z.re, z.im]
}

struct Flow {
    y: DMatrix<C64>,
    n_bus: usize,
    /// Fixed slack node and its voltage.
    slack: (usize, C64),
    /// Per bus: active power setpoint and voltage magnitude of a PV bus.
    pv: Vec<Option<(f64, f64)>>,
    /// Bus whose angle and active power are free when no machine exists.
    angle_ref_bus: Option<usize>,
}

impl Flow {
    fn unknowns(&self) -> (Vec<usize>, Vec<usize>) {
        let theta: Vec<usize> = (0..self.n_bus)
            .filter(|&b| Some(b) != self.angle_ref_bus)
            .collect();
        let mag: Vec<usize> = (0..self.n_bus).filter(|&b| self.pv[b].is_none()).collect();
        (theta, mag)
    }

    fn voltages(&self, u: &[f64], theta: &[usize], mag: &[usize]) -> Vec<C64> {
        let mut ang = vec![0.0; self.n_bus];
        let mut m: Vec<f64> = self.pv.iter().map(|p| p.map_or(1.0, |p| p.1)).collect();
        for (k, &b) in theta.iter().enumerate() {
            ang[b] = u[k];
        }
        for (k, &b) in mag.iter().enumerate() {
            m[b] = u[theta.len() + k];
        }
        let mut v: Vec<C64> = (0..self.n_bus).map(|b| C64::from_polar(m[b], ang[b])).collect();
        if self.slack.0 >= self.n_bus {
            v.resize(self.slack.0 + 1, C64::new(0.0, 0.0));
            v[self.slack.0] = self.slack.1;
        }
        v
    }

    fn residual(&self, u: &[f64], theta: &[usize], mag: &[usize]) -> Vec<f64> {
        let v = DVector::from_vec(self.voltages(u, theta, mag));
        let current = &self.y * &v;
        let s: Vec<C64> = (0..self.n_bus).map(|b| v[b] * current[b].conj()).collect();
        let mut r = Vec::with_capacity(u.len());
        for &b in theta {
            r.push(s[b].re - self.pv[b].map_or(0.0, |p| p.0));
        }
        for &b in mag {
            r.push(s[b].im);
        }
        r
    }

    fn solve(&self) -> Result<Vec<C64>, ConfigError> {
        let (theta, mag) = self.unknowns();
        let n = theta.len() + mag.len();
        let mut u: Vec<f64> = std::iter::repeat_n(0.0, theta.len())
            .chain(std::iter::repeat_n(1.0, mag.len()))
            .collect();
        for _ in 0..MAX_ITERATIONS {
            let r = self.residual(&u, &theta, &mag);
            if r.iter().all(|e| e.abs() < TOLERANCE) {
                return Ok(self.voltages(&u, &theta, &mag));
            }
            let mut jac = DMatrix::zeros(n, n);
            for j in 0..n {
                let h = 1e-7 * u[j].abs().max(1.0);
                let mut up = u.clone();
                up[j] += h;
                let rp = self.residual(&up, &theta, &mag);
                for i in 0..n {
                    jac[(i, j)] = (rp[i] - r[i]) / h;
                }
            }
            let step = jac
                .lu()
                .solve(&DVector::from_vec(r))
                .ok_or_else(|| ConfigError::invalid("network", "load flow Jacobian is singular"))?;
            for j in 0..n {
                u[j] -= step[j];
            }
        }
        Err(ConfigError::invalid(
            "network",
            "initial load flow did not converge",
        ))
    }
}

pub(super) fn initial_state(sys: &mut FlatSystem) -> Result<Vec<f64>, ConfigError> {
    let g = &sys.graph;
    let w = sys.omega_ref;
    let n_bus = g.buses.len();
    if g.machines.len() > 1 {
        return Err(ConfigError::invalid(
            "network.machines",
            "at most one synchronous machine is supported",
        ));
    }
    if g.machines.is_empty() && sys.gfcs.is_empty() {
        return Err(ConfigError::invalid("gfc", "the network has no source"));
    }

    let n_node = n_bus + g.machines.len();
    let mut y = DMatrix::from_element(n_node, n_node, C64::new(0.0, 0.0));
    let j = C64::new(0.0, 1.0);
    for br in &g.branches {
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, w * br.l);
        let a = br.ratio;
        y[(br.from, br.from)] += ys / (a * a);
        y[(br.from, br.to)] -= ys / a;
        y[(br.to, br.from)] -= ys / a;
        y[(br.to, br.to)] += ys;
    }
    for (b, bus) in g.buses.iter().enumerate() {
        y[(b, b)] += j * w * (bus.capacitance + sys.extra_c[b]);
    }
    for load in &g.loads {
        y[(load.bus, load.bus)] += C64::new(load.g, -load.b);
    }
    for (k, sm) in g.machines.iter().enumerate() {
        let node = n_bus + k;
        let ys = C64::new(1.0, 0.0) / C64::new(sm.r_a, w * sm.l_t);
        y[(node, node)] += ys;
        y[(node, sm.bus)] -= ys;
        y[(sm.bus, node)] -= ys;
        y[(sm.bus, sm.bus)] += ys;
    }

    let mut pv = vec![None; n_bus];
    for dev in &sys.gfcs {
        let sp = &dev.outer.setpoints;
        pv[dev.bus] = Some((sp.p_ref, sp.v_ref));
    }
    let (slack, angle_ref_bus) = match g.machines.first() {
        Some(sm) => ((n_bus, C64::new(sm.e_mag, 0.0)), None),
        None => {
            let b = sys.gfcs[0].bus;
            ((b, C64::new(pv[b].unwrap().1, 0.0)), Some(b))
        }
    };
    let flow = Flow {
        y: y.clone(),
        n_bus,
        slack,
        pv,
        angle_ref_bus,
    };
    let v = flow.solve()?;
    let v_nodes = DVector::from_vec(v.clone());
    let injection = &y * &v_nodes;

    let lay = &sys.layout;
    let mut x = vec![0.0; lay.dim];
    for b in 0..n_bus {
        let ab = phasor_to_ab(v[b]);
        x[lay.buses + 2 * b] = ab[0];
        x[lay.buses + 2 * b + 1] = ab[1];
    }
    for (k, br) in g.branches.iter().enumerate() {
        let i = (v[br.from] / br.ratio - v[br.to]) / C64::new(br.r, w * br.l);
        x[lay.branches + 2 * k] = i.re;
        x[lay.branches + 2 * k + 1] = i.im;
    }
    let mut p_set = Vec::new();
    for (k, sm) in g.machines.iter().enumerate() {
        let e = C64::new(sm.e_mag, 0.0);
        let i = (e - v[sm.bus]) / C64::new(sm.r_a, w * sm.l_t);
        let o = lay.machines + 4 * k;
        x[o] = 0.0;
        x[o + 1] = w;
        x[o + 2] = i.re;
        x[o + 3] = i.im;
        p_set.push((e * i.conj()).re);
    }

    for dev in &sys.gfcs {
        let s = &dev.slots;
        let b = dev.bus;
        let vb = v[b];
        let i_s = injection[b];
        let i_grid = i_s - j * w * (g.buses[b].capacitance + sys.extra_c[b]) * vb;
        let (p, q) = instantaneous_power(phasor_to_ab(vb), phasor_to_ab(i_grid));
        let prm = &dev.params;
        let theta = vb.arg();

        let v_s = vb + C64::new(prm.r_f, w * prm.l_f) * i_s;
        let p_switch = (v_s * i_s.conj()).re;
        let v_dc = dc_balance(prm, p, p_switch);
        x[s.v_dc] = v_dc;
        x[s.i_s] = i_s.re;
        x[s.i_s + 1] = i_s.im;
        x[s.i_tau] = raw_dc_demand(v_dc, p, prm);
        x[s.theta] = theta;
        if let Some(a) = s.aux {
            x[a] = match dev.outer.kind {
                OuterKind::Vsg { .. } => dev.outer.setpoints.omega_ref,
                _ => vb.norm(),
            };
        }
        x[s.p_f] = p;
        x[s.q_f] = q;

        // Integrators carry whatever the feedforward paths leave uncovered.
        let cfg = &dev.loops.cfg;
        let (wc, wl) = if cfg.decoupling {
            (w * prm.c_f, w * prm.l_f)
        } else {
            (0.0, 0.0)
        };
        let need_v = park(phasor_to_ab(i_s - i_grid - j * wc * vb), theta);
        let need_i = park(phasor_to_ab(v_s - vb - j * wl * i_s), theta);
        for k in 0..2 {
            x[s.xi + k] = integrator(need_v[k], cfg.ki_v, cfg.i_int_max);
            x[s.xi + 2 + k] = integrator(need_i[k], cfg.ki_i, cfg.v_int_max);
        }
    }

    for (sm, p) in sys.graph.machines.iter_mut().zip(p_set) {
        sm.p_set = p;
    }
    Ok(x)
}

/// DC voltage at which the source demand, driven by the measured terminal
/// power, equals the current drawn by the switch and the DC losses.
fn dc_balance(prm: &ConverterParams, p: f64, p_switch: f64) -> f64 {
    let mut v = prm.v_dc_ref;
    for _ in 0..MAX_ITERATIONS {
        let f = raw_dc_demand(v, p, prm) - p_switch / v - prm.g_dc * v;
        let df = -prm.k_dc + p_switch / (v * v) - prm.g_dc;
        let step = f / df;
        v -= step;
        if step.abs() < TOLERANCE * prm.v_dc_ref {
            break;
        }
    }
    v
}

fn integrator(contribution: f64, gain: f64, bound: f64) -> f64 {
    if gain > 0.0 {
        contribution.clamp(-bound, bound) / gain
    } else {
        0.0
    }
}
