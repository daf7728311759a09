//! Backward-facing series-parallel powertrain: wheel power request, battery
//! internal-resistance model and the engine/battery power split.

mod engine;

pub use engine::{EngineMap, OperatingPoint, LHV_J_PER_G, MAP_FORMAT, MAP_VERSION};

use serde::{Deserialize, Serialize};

use crate::cycles::{ACCEL_MAX, SPEED_MAX};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Speed and torque box for one machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineLimits<T> {
    pub speed_min_rpm: T,
    pub speed_max_rpm: T,
    pub torque_min_nm: T,
    pub torque_max_nm: T,
}

impl<T: Real> MachineLimits<T> {
    pub fn contains(&self, speed_rpm: T, torque_nm: T) -> bool {
        speed_rpm >= self.speed_min_rpm
            && speed_rpm <= self.speed_max_rpm
            && torque_nm >= self.torque_min_nm
            && torque_nm <= self.torque_max_nm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentLimits<T> {
    pub motor: MachineLimits<T>,
    pub generator: MachineLimits<T>,
    pub engine: MachineLimits<T>,
}

impl<T: Real> Default for ComponentLimits<T> {
    fn default() -> Self {
        let open = MachineLimits {
            speed_min_rpm: T::lit(-20_000.0),
            speed_max_rpm: T::lit(20_000.0),
            torque_min_nm: T::lit(-1_000.0),
            torque_max_nm: T::lit(1_000.0),
        };
        ComponentLimits {
            motor: open,
            generator: open,
            engine: MachineLimits {
                speed_min_rpm: T::lit(1000.0),
                speed_max_rpm: T::lit(4500.0),
                torque_min_nm: T::zero(),
                torque_max_nm: T::lit(115.0),
            },
        }
    }
}

/// Vehicle, battery and cost constants.
///
/// Defaults are the reference vehicle: 1325 kg, `f = 0.012`, `A = 2.16 m²`,
/// `C_D = 0.26`, 150 V open-circuit, 0.25 Ω, 8.1 Ah, SOC reference 0.65 and
/// penalty weight 1000. Driveline efficiencies and battery power limits are
/// modelling choices, not vehicle data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(serialize = "T: Serialize", deserialize = "T: Real"))]
pub struct PowertrainParams<T> {
    pub mass_kg: T,
    pub rolling_coeff: T,
    pub gravity: T,
    pub air_density: T,
    pub frontal_area_m2: T,
    pub drag_coeff: T,
    pub v_oc: T,
    /// Nominal pack voltage; informational only, the SOC dynamics use `v_oc`.
    pub nominal_voltage: T,
    pub r0_ohm: T,
    pub q_cap_ah: T,
    pub soc_ref: T,
    pub lambda_soc: T,
    pub soc_min: T,
    pub soc_max: T,
    pub p_bat_min: T,
    pub p_bat_max: T,
    pub eta_drive: T,
    pub eta_regen: T,
    #[serde(skip, default = "EngineMap::synthesized")]
    pub engine: EngineMap<T>,
    pub limits: ComponentLimits<T>,
}

impl<T: Real> Default for PowertrainParams<T> {
    fn default() -> Self {
        PowertrainParams {
            mass_kg: T::lit(1325.0),
            rolling_coeff: T::lit(0.012),
            gravity: T::lit(9.8),
            air_density: T::lit(1.225),
            frontal_area_m2: T::lit(2.16),
            drag_coeff: T::lit(0.26),
            v_oc: T::lit(150.0),
            nominal_voltage: T::lit(200.0),
            r0_ohm: T::lit(0.25),
            q_cap_ah: T::lit(8.1),
            soc_ref: T::lit(0.65),
            lambda_soc: T::lit(1000.0),
            soc_min: T::lit(0.3),
            soc_max: T::lit(0.9),
            p_bat_min: T::lit(-20_000.0),
            p_bat_max: T::lit(20_000.0),
            eta_drive: T::lit(0.95),
            eta_regen: T::lit(0.90),
            engine: EngineMap::synthesized(),
            limits: ComponentLimits::default(),
        }
    }
}

/// The three contributions to the wheel power request, W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerRequest<T> {
    pub rolling: T,
    pub aero: T,
    pub inertial: T,
}

impl<T: Real> PowerRequest<T> {
    pub fn total(&self) -> T {
        self.rolling + self.aero + self.inertial
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSplit<T> {
    pub p_ice: T,
    pub p_bat: T,
    /// Battery power hit a limit and was clamped.
    pub clamped: bool,
}

impl<T: Real> PowertrainParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass_kg", self.mass_kg),
            ("rolling_coeff", self.rolling_coeff),
            ("gravity", self.gravity),
            ("air_density", self.air_density),
            ("frontal_area_m2", self.frontal_area_m2),
            ("drag_coeff", self.drag_coeff),
            ("v_oc", self.v_oc),
            ("r0_ohm", self.r0_ohm),
            ("q_cap_ah", self.q_cap_ah),
            ("lambda_soc", self.lambda_soc),
            ("soc_min", self.soc_min),
            ("p_bat_max", self.p_bat_max),
            ("eta_drive", self.eta_drive),
            ("eta_regen", self.eta_regen),
        ];
        for (name, value) in positive {
            if !(value > T::zero() && value.is_finite()) {
                return Err(Error::Config(format!(
                    "powertrain.{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.soc_min < self.soc_ref && self.soc_ref < self.soc_max && self.soc_max <= T::one()) {
            return Err(Error::Config(
                "powertrain: need soc_min < soc_ref < soc_max <= 1".into(),
            ));
        }
        if !(self.p_bat_min < T::zero()) {
            return Err(Error::Config("powertrain.p_bat_min must be negative".into()));
        }
        if self.p_bat_max > self.power_ceiling() {
            return Err(Error::Config(format!(
                "powertrain.p_bat_max = {} exceeds V_oc^2/(4 r0) = {}",
                self.p_bat_max,
                self.power_ceiling()
            )));
        }
        if self.eta_drive > T::one() || self.eta_regen > T::one() {
            return Err(Error::Config("powertrain: efficiencies must be <= 1".into()));
        }
        self.engine.validate()?;
        let ice = &self.limits.engine;
        if ice.speed_min_rpm > self.engine.speed_min()
            || ice.speed_max_rpm < self.engine.speed_max()
            || ice.torque_min_nm > T::zero()
            || ice.torque_max_nm < self.engine.torque_max()
        {
            return Err(Error::Config(
                "powertrain: engine limits narrower than the engine map".into(),
            ));
        }
        Ok(())
    }

    /// Largest battery power for which the internal-resistance model has a
    /// real solution, `V_oc² / (4 r0)`.
    pub fn power_ceiling(&self) -> T {
        self.v_oc * self.v_oc / (T::lit(4.0) * self.r0_ohm)
    }

    fn capacity_coulombs(&self) -> T {
        self.q_cap_ah * T::lit(3600.0)
    }

    pub fn torque_max(&self) -> T {
        self.engine.torque_max()
    }
}

/// Wheel power request split into rolling, aerodynamic and inertial terms.
pub fn power_request_terms<T: Real>(params: &PowertrainParams<T>, v: T, a: T) -> Result<PowerRequest<T>> {
    if !(v >= T::zero() && v <= T::lit(SPEED_MAX)) {
        return Err(Error::domain("speed", v.as_f64(), 0.0, SPEED_MAX));
    }
    if !(a >= T::lit(-ACCEL_MAX) && a <= T::lit(ACCEL_MAX)) {
        return Err(Error::domain("acceleration", a.as_f64(), -ACCEL_MAX, ACCEL_MAX));
    }
    let p = params;
    Ok(PowerRequest {
        rolling: p.mass_kg * p.gravity * p.rolling_coeff * v,
        aero: T::lit(0.5) * p.air_density * p.frontal_area_m2 * p.drag_coeff * v * v * v,
        inertial: p.mass_kg * a * v,
    })
}

/// Wheel power request, W. Negative while braking.
pub fn power_request<T: Real>(params: &PowertrainParams<T>, v: T, a: T) -> Result<T> {
    power_request_terms(params, v, a).map(|r| r.total())
}

fn check_battery_power<T: Real>(params: &PowertrainParams<T>, p_bat: T) -> Result<()> {
    let ceiling = params.power_ceiling();
    if !(p_bat <= ceiling) {
        return Err(Error::InfeasiblePower {
            p_bat: p_bat.as_f64(),
            ceiling: ceiling.as_f64(),
        });
    }
    if !(p_bat >= params.p_bat_min && p_bat <= params.p_bat_max) {
        return Err(Error::BatteryLimit {
            p_bat: p_bat.as_f64(),
            lo: params.p_bat_min.as_f64(),
            hi: params.p_bat_max.as_f64(),
        });
    }
    Ok(())
}

/// Battery current for a terminal power, A (discharge positive).
///
/// Uses `2P / (V + sqrt(V² − 4 r P))`, the cancellation-free form of
/// `(V − sqrt(V² − 4 r P)) / (2 r)`.
pub fn battery_current<T: Real>(params: &PowertrainParams<T>, p_bat: T) -> Result<T> {
    check_battery_power(params, p_bat)?;
    Ok(current_unchecked(params, p_bat))
}

fn current_unchecked<T: Real>(params: &PowertrainParams<T>, p_bat: T) -> T {
    let v = params.v_oc;
    let disc = (v * v - T::lit(4.0) * params.r0_ohm * p_bat).max(T::zero());
    T::lit(2.0) * p_bat / (v + disc.sqrt())
}

pub fn terminal_voltage<T: Real>(params: &PowertrainParams<T>, current: T) -> T {
    params.v_oc - current * params.r0_ohm
}

/// d(SOC)/dt in 1/s; negative while discharging.
pub fn soc_derivative<T: Real>(params: &PowertrainParams<T>, p_bat: T) -> Result<T> {
    check_battery_power(params, p_bat)?;
    Ok(soc_rate_unchecked(params, p_bat))
}

pub(crate) fn soc_rate_unchecked<T: Real>(params: &PowertrainParams<T>, p_bat: T) -> T {
    -current_unchecked(params, p_bat) / params.capacity_coulombs()
}

/// Battery terminal power needed to close the balance `p_req = p_ice + p_bat_eff`.
///
/// Discharge is scaled up by `1/eta_drive`; surplus engine or braking power
/// reaches the battery scaled down by `eta_regen`. No clamping.
pub fn battery_power_for<T: Real>(params: &PowertrainParams<T>, p_req: T, p_ice: T) -> T {
    let deficit = p_req - p_ice;
    if deficit >= T::zero() {
        deficit / params.eta_drive
    } else {
        deficit * params.eta_regen
    }
}

/// Effective power a battery terminal power delivers to the driveline.
pub fn effective_battery_power<T: Real>(params: &PowertrainParams<T>, p_bat: T) -> T {
    if p_bat >= T::zero() {
        p_bat * params.eta_drive
    } else {
        p_bat / params.eta_regen
    }
}

/// Splits the wheel request for a commanded engine torque. Battery power
/// outside `[p_bat_min, p_bat_max]` is clamped and flagged: excess braking
/// goes to the friction brakes, excess traction demand goes unmet.
pub fn split_power<T: Real>(params: &PowertrainParams<T>, p_req: T, t_ice: T) -> Result<PowerSplit<T>> {
    let op = params.engine.operating_point(t_ice)?;
    Ok(split_with_engine_power(params, p_req, op.power_w))
}

pub fn split_with_engine_power<T: Real>(params: &PowertrainParams<T>, p_req: T, p_ice: T) -> PowerSplit<T> {
    let raw = battery_power_for(params, p_req, p_ice);
    let p_bat = raw.max(params.p_bat_min).min(params.p_bat_max);
    PowerSplit {
        p_ice,
        p_bat,
        clamped: p_bat != raw,
    }
}

/// Lowest engine torque for which the battery can cover the rest of `p_req`
/// within `p_bat_max`. Zero when the battery alone suffices.
pub fn torque_floor<T: Real>(params: &PowertrainParams<T>, p_req: T) -> T {
    let shortfall = p_req - params.p_bat_max * params.eta_drive;
    if shortfall <= T::zero() {
        T::zero()
    } else {
        params.engine.torque_for_power(shortfall)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PowertrainParams<f64> {
        PowertrainParams::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn defaults_validate() {
        params().validate().unwrap();
        PowertrainParams::<f32>::default().validate().unwrap();
    }

    #[test]
    fn power_request_examples() {
        let p = params();
        assert_eq!(power_request(&p, 0.0, 0.0).unwrap(), 0.0);
        // 1325*9.8*0.012*10 + 0.5*1.225*2.16*0.26*1000
        let expected = 1558.2 + 343.98;
        assert!(rel(power_request(&p, 10.0, 0.0).unwrap(), expected) < 1e-6);
        let diff = power_request(&p, 10.0, 1.0).unwrap() - power_request(&p, 10.0, 0.0).unwrap();
        assert!(rel(diff, 13_250.0) < 1e-12);
        assert!(power_request(&p, 46.0, 0.0).is_err());
        assert!(power_request(&p, 10.0, -5.5).is_err());
    }

    #[test]
    fn aero_is_cubic_rolling_linear() {
        let p = params();
        let a = power_request_terms(&p, 7.0, 0.0).unwrap();
        let b = power_request_terms(&p, 14.0, 0.0).unwrap();
        assert!(rel(b.aero, 8.0 * a.aero) < 1e-14);
        assert!(rel(b.rolling, 2.0 * a.rolling) < 1e-14);
        assert_eq!(b.inertial, 0.0);
    }

    #[test]
    fn soc_derivative_examples() {
        let mut p = params();
        assert_eq!(soc_derivative(&p, 0.0).unwrap(), 0.0);
        p.p_bat_max = 22_500.0;
        let d = soc_derivative(&p, 22_500.0).unwrap();
        let expected = -150.0 / (2.0 * 29_160.0 * 0.25);
        assert!(rel(d, expected) < 1e-12);
        assert!((d + 1.02881e-2).abs() < 1e-7);
        assert!(matches!(
            soc_derivative(&p, 22_501.0),
            Err(Error::InfeasiblePower { .. })
        ));
        let q = params();
        assert!(matches!(soc_derivative(&q, 21_000.0), Err(Error::BatteryLimit { .. })));
        assert!(soc_derivative(&q, -5000.0).unwrap() > 0.0);
    }

    #[test]
    fn battery_current_at_ceiling() {
        let mut p = params();
        p.p_bat_max = 22_500.0;
        let i = battery_current(&p, 22_500.0).unwrap();
        assert_eq!(i, 300.0);
        assert_eq!(terminal_voltage(&p, i), 75.0);
        assert_eq!(battery_current(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn split_examples() {
        let p = params();
        let s = split_power(&p, 0.0, 0.0).unwrap();
        assert_eq!((s.p_ice, s.p_bat, s.clamped), (0.0, 0.0, false));

        let mut unit = params();
        unit.eta_drive = 1.0;
        let t = unit.engine.torque_for_power(10_000.0);
        let s = split_power(&unit, 10_000.0, t).unwrap();
        assert!(s.p_bat.abs() < 1e-6, "{}", s.p_bat);
        let s = split_with_engine_power(&unit, 10_000.0, 10_000.0);
        assert_eq!(s.p_bat, 0.0);

        let s = split_power(&p, -5000.0, 0.0).unwrap();
        assert!((s.p_bat + 4500.0).abs() < 1e-12);
        assert!(soc_derivative(&p, s.p_bat).unwrap() > 0.0);
    }

    #[test]
    fn split_clamps_and_flags() {
        let p = params();
        let s = split_power(&p, -40_000.0, 0.0).unwrap();
        assert_eq!(s.p_bat, -20_000.0);
        assert!(s.clamped);
        let s = split_power(&p, 40_000.0, 0.0).unwrap();
        assert_eq!(s.p_bat, 20_000.0);
        assert!(s.clamped);
    }

    #[test]
    fn torque_floor_covers_shortfall() {
        let p = params();
        assert_eq!(torque_floor(&p, 15_000.0), 0.0);
        let t = torque_floor(&p, 40_000.0);
        assert!(t > 0.0);
        let s = split_power(&p, 40_000.0, t).unwrap();
        assert!(!s.clamped || (s.p_bat - p.p_bat_max).abs() < 1e-6);
        assert!(s.p_bat <= p.p_bat_max);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = params();
        p.p_bat_max = 23_000.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.soc_ref = 0.95;
        assert!(p.validate().is_err());
        let mut p = params();
        p.mass_kg = 0.0;
        assert!(p.validate().is_err());
    }
}
