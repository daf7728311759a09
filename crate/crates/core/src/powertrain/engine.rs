//! Static engine model: gridded fuel-rate map and the torque-to-speed
//! operating line.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAP_FORMAT: &str = "hevtl-engine-map";
pub const MAP_VERSION: u32 = 1;

/// Lower heating value of gasoline, J/g.
pub const LHV_J_PER_G: f64 = 42_600.0;

const RPM_TO_RAD_S: f64 = std::f64::consts::PI / 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineMap<T> {
    /// Torque grid, Nm, strictly increasing, starting at 0.
    pub torque_nodes: Vec<T>,
    /// Speed grid, rpm, strictly increasing.
    pub speed_nodes: Vec<T>,
    /// Fuel rate in g/s, row-major `[torque][speed]`.
    pub fuel_gps: Vec<T>,
    /// Operating-line knots `(torque Nm, speed rpm)`, torque strictly increasing.
    pub line: Vec<(T, T)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint<T> {
    pub speed_rpm: T,
    pub power_w: T,
    pub fuel_gps: T,
}

impl<T: Real> OperatingPoint<T> {
    pub fn off() -> Self {
        OperatingPoint {
            speed_rpm: T::zero(),
            power_w: T::zero(),
            fuel_gps: T::zero(),
        }
    }
}

/// Willans-line fuel model used to generate the default map.
///
/// Fuel power is `P / eta(w) + P_loss(w)` with `eta` peaking at 4200 rpm,
/// plus an enrichment surcharge above 90 Nm.
fn willans_fuel_gps(torque: f64, rpm: f64) -> f64 {
    if torque <= 0.0 {
        return 0.0;
    }
    let power = torque * rpm * RPM_TO_RAD_S;
    let x = (rpm - 4200.0) / 3500.0;
    let eta = 0.38 - 0.12 * x * x;
    let loss = 300.0 + 0.25 * rpm;
    let rich = (torque - 90.0).max(0.0) / 115.0;
    let enrich = 1.0 + 1.5 * rich * rich;
    (power / eta * enrich + loss) / LHV_J_PER_G
}

impl<T: Real> EngineMap<T> {
    /// The bundled map: 24 torque nodes (0..=115 Nm step 5) by 15 speed nodes
    /// (1000..=4500 rpm step 250), operating line 1000 rpm at 0 Nm rising
    /// linearly to 4200 rpm at 115 Nm.
    pub fn synthesized() -> Self {
        let torque: Vec<f64> = (0..24).map(|i| 5.0 * i as f64).collect();
        let speed: Vec<f64> = (0..15).map(|j| 1000.0 + 250.0 * j as f64).collect();
        let mut fuel = Vec::with_capacity(torque.len() * speed.len());
        for &t in &torque {
            for &w in &speed {
                fuel.push(T::lit(willans_fuel_gps(t, w)));
            }
        }
        EngineMap {
            torque_nodes: torque.into_iter().map(T::lit).collect(),
            speed_nodes: speed.into_iter().map(T::lit).collect(),
            fuel_gps: fuel,
            line: vec![(T::zero(), T::lit(1000.0)), (T::lit(115.0), T::lit(4200.0))],
        }
    }

    pub fn torque_max(&self) -> T {
        *self.torque_nodes.last().expect("validated map")
    }

    pub fn speed_min(&self) -> T {
        self.speed_nodes[0]
    }

    pub fn speed_max(&self) -> T {
        *self.speed_nodes.last().expect("validated map")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("engine map: {m}")));
        let nt = self.torque_nodes.len();
        let nw = self.speed_nodes.len();
        if nt < 2 || nw < 2 {
            return bad("needs at least 2 nodes per axis");
        }
        if !strictly_increasing(&self.torque_nodes) || !strictly_increasing(&self.speed_nodes) {
            return bad("grid nodes must be strictly increasing");
        }
        if self.torque_nodes[0] != T::zero() {
            return bad("torque grid must start at 0 Nm");
        }
        if self.speed_nodes[0] <= T::zero() {
            return bad("speed grid must be positive");
        }
        if self.fuel_gps.len() != nt * nw {
            return bad("fuel table size does not match the grid");
        }
        if self.fuel_gps.iter().any(|f| !f.is_finite() || *f < T::zero()) {
            return bad("fuel rates must be finite and non-negative");
        }
        if self.fuel_gps[..nw].iter().any(|f| *f != T::zero()) {
            return bad("fuel rate at 0 Nm must be 0 (idle stop)");
        }
        for j in 0..nw {
            for i in 1..nt {
                if self.fuel_gps[i * nw + j] < self.fuel_gps[(i - 1) * nw + j] {
                    return bad("fuel rate must be non-decreasing in torque");
                }
            }
        }
        if self.line.len() < 2 {
            return bad("operating line needs at least 2 knots");
        }
        let line_t: Vec<T> = self.line.iter().map(|k| k.0).collect();
        if !strictly_increasing(&line_t) {
            return bad("operating-line torques must be strictly increasing");
        }
        if self.line.windows(2).any(|w| w[1].1 < w[0].1) {
            return bad("operating-line speed must be non-decreasing in torque");
        }
        if self
            .line
            .iter()
            .any(|&(_, w)| w < self.speed_min() || w > self.speed_max())
        {
            return bad("operating line leaves the speed range");
        }
        Ok(())
    }

    /// Bilinear fuel-rate lookup, g/s. Zero torque is idle stop at any speed.
    pub fn fuel_rate(&self, torque: T, rpm: T) -> Result<T> {
        if !(torque >= T::zero() && torque <= self.torque_max()) {
            return Err(Error::domain(
                "engine torque",
                torque.as_f64(),
                0.0,
                self.torque_max().as_f64(),
            ));
        }
        if torque == T::zero() && (rpm == T::zero() || (rpm >= self.speed_min() && rpm <= self.speed_max())) {
            return Ok(T::zero());
        }
        if !(rpm >= self.speed_min() && rpm <= self.speed_max()) {
            return Err(Error::domain(
                "engine speed",
                rpm.as_f64(),
                self.speed_min().as_f64(),
                self.speed_max().as_f64(),
            ));
        }
        let (i, ft) = bracket(&self.torque_nodes, torque);
        let (j, fw) = bracket(&self.speed_nodes, rpm);
        let nw = self.speed_nodes.len();
        let f = |a: usize, b: usize| self.fuel_gps[a * nw + b];
        let one = T::one();
        Ok((one - ft) * (one - fw) * f(i, j)
            + (one - ft) * fw * f(i, j + 1)
            + ft * (one - fw) * f(i + 1, j)
            + ft * fw * f(i + 1, j + 1))
    }

    /// Speed on the operating line for a positive torque, rpm.
    pub fn line_speed(&self, torque: T) -> T {
        let knots = &self.line;
        if torque <= knots[0].0 {
            return knots[0].1;
        }
        let last = knots[knots.len() - 1];
        if torque >= last.0 {
            return last.1;
        }
        let k = knots.partition_point(|&(t, _)| t <= torque) - 1;
        let (t0, w0) = knots[k];
        let (t1, w1) = knots[k + 1];
        w0 + (w1 - w0) * (torque - t0) / (t1 - t0)
    }

    /// Engine speed, mechanical power and fuel rate for a commanded torque.
    pub fn operating_point(&self, torque: T) -> Result<OperatingPoint<T>> {
        if !(torque >= T::zero() && torque <= self.torque_max()) {
            return Err(Error::domain(
                "engine torque",
                torque.as_f64(),
                0.0,
                self.torque_max().as_f64(),
            ));
        }
        if torque == T::zero() {
            return Ok(OperatingPoint::off());
        }
        let speed_rpm = self.line_speed(torque);
        Ok(OperatingPoint {
            speed_rpm,
            power_w: torque * speed_rpm * T::lit(RPM_TO_RAD_S),
            fuel_gps: self.fuel_rate(torque, speed_rpm)?,
        })
    }

    pub fn power_at(&self, torque: T) -> T {
        if torque <= T::zero() {
            return T::zero();
        }
        torque * self.line_speed(torque) * T::lit(RPM_TO_RAD_S)
    }

    /// Smallest torque whose line power reaches `power_w`, clamped to the
    /// torque range. The returned torque never undershoots the target.
    pub fn torque_for_power(&self, power_w: T) -> T {
        if power_w <= T::zero() {
            return T::zero();
        }
        let mut hi = self.torque_max();
        if self.power_at(hi) <= power_w {
            return hi;
        }
        let mut lo = T::zero();
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.power_at(mid) >= power_w {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAP_FORMAT},{MAP_VERSION}\n");
        let row = |s: &mut String, key: &str, xs: &mut dyn Iterator<Item = T>| {
            s.push_str(key);
            for x in xs {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        };
        row(&mut s, "torque_nm", &mut self.torque_nodes.iter().copied());
        row(&mut s, "speed_rpm", &mut self.speed_nodes.iter().copied());
        row(&mut s, "line_torque_nm", &mut self.line.iter().map(|k| k.0));
        row(&mut s, "line_speed_rpm", &mut self.line.iter().map(|k| k.1));
        for r in self.fuel_gps.chunks(self.speed_nodes.len()) {
            row(&mut s, "fuel_gps", &mut r.iter().copied());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let fmt_err = |line: usize, m: String| Error::Format(format!("engine map line {}: {m}", line + 1));
        let (n0, header) = lines.next().ok_or_else(|| Error::Format("empty engine map".into()))?;
        match header.trim().split_once(',') {
            Some((MAP_FORMAT, v)) if v.trim() == MAP_VERSION.to_string() => {}
            _ => return Err(fmt_err(n0, format!("expected header `{MAP_FORMAT},{MAP_VERSION}`"))),
        }
        let mut map = EngineMap {
            torque_nodes: Vec::new(),
            speed_nodes: Vec::new(),
            fuel_gps: Vec::new(),
            line: Vec::new(),
        };
        let mut line_t = Vec::new();
        let mut line_w = Vec::new();
        for (n, l) in lines {
            let mut parts = l.trim().split(',');
            let key = parts.next().unwrap_or_default();
            let values = parts
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| fmt_err(n, format!("not a number: `{p}`")))
                })
                .collect::<Result<Vec<T>>>()?;
            match key {
                "torque_nm" => map.torque_nodes = values,
                "speed_rpm" => map.speed_nodes = values,
                "line_torque_nm" => line_t = values,
                "line_speed_rpm" => line_w = values,
                "fuel_gps" => {
                    if values.len() != map.speed_nodes.len() {
                        return Err(fmt_err(n, "fuel row length differs from the speed grid".into()));
                    }
                    map.fuel_gps.extend(values)
                }
                other => return Err(fmt_err(n, format!("unknown key `{other}`"))),
            }
        }
        if line_t.len() != line_w.len() {
            return Err(Error::Format("operating-line torque/speed lengths differ".into()));
        }
        map.line = line_t.into_iter().zip(line_w).collect();
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn strictly_increasing<T: Real>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

/// Cell index and fractional position of `x` in `nodes`; `x` must be in range.
fn bracket<T: Real>(nodes: &[T], x: T) -> (usize, T) {
    let n = nodes.len();
    let i = nodes.partition_point(|&node| node <= x).clamp(1, n - 1) - 1;
    let frac = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
    (i, frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> EngineMap<f64> {
        EngineMap::synthesized()
    }

    #[test]
    fn synthesized_map_is_valid() {
        let m = map();
        m.validate().unwrap();
        assert_eq!(m.torque_max(), 115.0);
        assert_eq!(m.speed_min(), 1000.0);
        assert_eq!(m.speed_max(), 4500.0);
    }

    #[test]
    fn idle_stop_is_free() {
        let m = map();
        for w in [0.0, 1000.0, 2345.0, 4500.0] {
            assert_eq!(m.fuel_rate(0.0, w).unwrap(), 0.0);
        }
        assert!(m.fuel_rate(10.0, 0.0).is_err());
        assert!(m.fuel_rate(10.0, 900.0).is_err());
        assert!(m.fuel_rate(116.0, 2000.0).is_err());
    }

    #[test]
    fn grid_nodes_are_exact() {
        let m = map();
        let nw = m.speed_nodes.len();
        for (i, &t) in m.torque_nodes.iter().enumerate() {
            for (j, &w) in m.speed_nodes.iter().enumerate() {
                assert_eq!(m.fuel_rate(t, w).unwrap(), m.fuel_gps[i * nw + j]);
            }
        }
    }

    #[test]
    fn cell_center_is_mean_of_corners() {
        let m = map();
        let nw = m.speed_nodes.len();
        let (i, j) = (7, 4);
        let t = 0.5 * (m.torque_nodes[i] + m.torque_nodes[i + 1]);
        let w = 0.5 * (m.speed_nodes[j] + m.speed_nodes[j + 1]);
        let corners = [
            m.fuel_gps[i * nw + j],
            m.fuel_gps[i * nw + j + 1],
            m.fuel_gps[(i + 1) * nw + j],
            m.fuel_gps[(i + 1) * nw + j + 1],
        ];
        let mean = corners.iter().sum::<f64>() / 4.0;
        assert!((m.fuel_rate(t, w).unwrap() - mean).abs() <= 1e-15 * mean.abs().max(1.0));
    }

    #[test]
    fn operating_point_examples() {
        let m = map();
        let off = m.operating_point(0.0).unwrap();
        assert_eq!((off.speed_rpm, off.power_w, off.fuel_gps), (0.0, 0.0, 0.0));
        let full = m.operating_point(115.0).unwrap();
        assert_eq!(full.speed_rpm, 4200.0);
        let expect = 115.0 * 4200.0 * 2.0 * std::f64::consts::PI / 60.0;
        assert!((full.power_w - expect).abs() < 1e-9);
        assert!((full.power_w - 50579.6).abs() < 0.05);
        for k in 1..=115 {
            let op = m.operating_point(k as f64).unwrap();
            assert!(op.speed_rpm >= 1000.0 && op.speed_rpm <= 4500.0);
        }
    }

    #[test]
    fn torque_for_power_never_undershoots() {
        let m = map();
        for p in [1.0, 150.0, 10_000.0, 33_333.3, 50_000.0] {
            let t = m.torque_for_power(p);
            assert!(m.power_at(t) >= p);
            assert!(m.power_at(t) - p < 1e-6 * p.max(1.0));
        }
        assert_eq!(m.torque_for_power(1e9), 115.0);
        assert_eq!(m.torque_for_power(-5.0), 0.0);
    }

    #[test]
    fn text_round_trip() {
        let m = map();
        let back = EngineMap::<f64>::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(EngineMap::<f64>::from_text("hevtl-engine-map,2\n").is_err());
    }

    #[test]
    fn bundled_file_matches_generator() {
        let text = include_str!("../../data/engine_map_v1.csv");
        assert_eq!(EngineMap::<f64>::from_text(text).unwrap(), map());
    }
}
