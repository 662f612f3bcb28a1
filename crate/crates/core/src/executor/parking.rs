use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Episode, ExecutionError, Sut, Trajectory};
use crate::config::{ConfigSchema, EnvConfiguration, ParameterValue};

/// Lot layout: spots 1..=10 form the upper row (facing +y), 11..=20 the
/// lower row; columns are centred on x = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParkingGeometry {
    pub spots_per_row: usize,
    pub spot_width: f64,
    /// Distance from the aisle centre line to a spot centre.
    pub row_offset: f64,
    /// Half extents of a parked vehicle's box (x, y).
    pub parked_half_extents: (f64, f64),
    /// The ego vehicle is a disc of this radius for collision checks.
    pub ego_radius: f64,
}

impl Default for ParkingGeometry {
    fn default() -> Self {
        Self {
            spots_per_row: 10,
            spot_width: 3.0,
            row_offset: 10.0,
            parked_half_extents: (0.9, 2.1),
            ego_radius: 0.9,
        }
    }
}

impl ParkingGeometry {
    /// Centre of a 1-indexed spot.
    pub fn spot_centre(&self, spot: usize) -> (f64, f64) {
        let col = (spot - 1) % self.spots_per_row;
        let x = (col as f64 - (self.spots_per_row as f64 - 1.0) / 2.0) * self.spot_width;
        let y = if spot <= self.spots_per_row {
            self.row_offset
        } else {
            -self.row_offset
        };
        (x, y)
    }

    fn hits_parked(&self, p: (f64, f64), spot: usize) -> bool {
        let (cx, cy) = self.spot_centre(spot);
        let (hx, hy) = self.parked_half_extents;
        let dx = ((p.0 - cx).abs() - hx).max(0.0);
        let dy = ((p.1 - cy).abs() - hy).max(0.0);
        dx * dx + dy * dy < self.ego_radius * self.ego_radius
    }
}

/// Kinematic bicycle model driven by a two-phase proportional steering
/// controller: first toward an approach point in the aisle in front of the
/// goal spot, then into the spot. Initial heading is `π/2 + 2π·head_ego`, so
/// `head_ego = 0` faces the upper row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyParkingParams {
    pub geometry: ParkingGeometry,
    pub dt: f64,
    pub max_speed: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    pub steer_gain: f64,
    /// Distance of the approach point from the spot centre, toward the aisle.
    pub approach_distance: f64,
    /// Switch to the final phase within this distance of the approach point.
    pub approach_tolerance: f64,
    pub position_tolerance: f64,
    /// In revolutions, modulo a half turn.
    pub heading_tolerance: f64,
    pub timeout_steps: usize,
}

impl Default for ToyParkingParams {
    fn default() -> Self {
        Self {
            geometry: ParkingGeometry::default(),
            dt: 0.1,
            max_speed: 5.0,
            wheelbase: 2.5,
            max_steer: 0.8,
            steer_gain: 2.0,
            approach_distance: 8.0,
            approach_tolerance: 2.5,
            position_tolerance: 0.5,
            heading_tolerance: 0.05,
            timeout_steps: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyParkingSut {
    schema: ConfigSchema,
    params: ToyParkingParams,
    slots: [usize; 4],
}

fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Scenario decoded from a parking configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParkingScenario {
    pub goal: usize,
    pub heading: f64,
    pub occupied: Vec<usize>,
    pub start: (f64, f64),
}

impl ToyParkingSut {
    pub fn new(schema: ConfigSchema, params: ToyParkingParams) -> Result<Self, ExecutionError> {
        let find = |name: &str| {
            schema
                .index_of(name)
                .ok_or_else(|| ExecutionError::UnsupportedSchema(schema.name().to_string()))
        };
        let slots = [
            find("goal_lane")?,
            find("head_ego")?,
            find("pvehicles")?,
            find("pos_ego")?,
        ];
        let lot = 2 * params.geometry.spots_per_row;
        if params.dt <= 0.0 || params.max_speed <= 0.0 || params.wheelbase <= 0.0 || lot == 0 {
            return Err(ExecutionError::InvalidConfig(
                "parking constants must be positive".into(),
            ));
        }
        Ok(Self {
            schema,
            params,
            slots,
        })
    }

    pub fn params(&self) -> &ToyParkingParams {
        &self.params
    }

    pub fn scenario(&self, config: &EnvConfiguration) -> Result<ParkingScenario, ExecutionError> {
        let bad = || ExecutionError::UnsupportedSchema(self.schema.name().to_string());
        let goal = match config.value(self.slots[0]) {
            ParameterValue::Int(v) => *v as usize,
            _ => return Err(bad()),
        };
        let head = match config.value(self.slots[1]) {
            ParameterValue::Float(v) => *v,
            _ => return Err(bad()),
        };
        let occupied = match config.value(self.slots[2]) {
            ParameterValue::Set(s) => s.iter().copied().collect(),
            _ => return Err(bad()),
        };
        let start = match config.value(self.slots[3]) {
            ParameterValue::Tuple(t) if t.len() == 2 => (t[0], t[1]),
            _ => return Err(bad()),
        };
        let lot = 2 * self.params.geometry.spots_per_row;
        if goal == 0 || goal > lot {
            return Err(bad());
        }
        Ok(ParkingScenario {
            goal,
            heading: FRAC_PI_2 + TAU * head,
            occupied,
            start,
        })
    }

    /// Simulates one episode; returns the verdict and the visited positions.
    pub fn simulate(&self, scenario: &ParkingScenario) -> (bool, Vec<(f64, f64)>) {
        let p = &self.params;
        let g = &p.geometry;
        let goal = g.spot_centre(scenario.goal);
        let inward = goal.1.signum();
        let approach = (goal.0, goal.1 - inward * p.approach_distance);
        let (mut x, mut y, mut theta) = (scenario.start.0, scenario.start.1, scenario.heading);
        let mut path = vec![(x, y)];
        let mut final_phase = false;

        for _ in 0..p.timeout_steps {
            if !final_phase && (x - approach.0).hypot(y - approach.1) <= p.approach_tolerance {
                final_phase = true;
            }
            let target = if final_phase { goal } else { approach };
            let dist = (x - target.0).hypot(y - target.1);
            let bearing = (target.1 - y).atan2(target.0 - x);
            let steer =
                (p.steer_gain * wrap_angle(bearing - theta)).clamp(-p.max_steer, p.max_steer);
            let speed = if final_phase {
                (2.0 * dist).clamp(1.0, p.max_speed)
            } else {
                p.max_speed
            };
            x += speed * theta.cos() * p.dt;
            y += speed * theta.sin() * p.dt;
            theta = wrap_angle(theta + speed / p.wheelbase * steer.tan() * p.dt);
            path.push((x, y));

            if scenario
                .occupied
                .iter()
                .any(|&s| s != scenario.goal && g.hits_parked((x, y), s))
            {
                return (true, path);
            }
            let heading_error = wrap_angle(2.0 * (theta - FRAC_PI_2)).abs() / 2.0;
            if (x - goal.0).hypot(y - goal.1) <= p.position_tolerance
                && heading_error <= p.heading_tolerance * TAU
            {
                return (false, path);
            }
        }
        (true, path)
    }
}

impl Sut for ToyParkingSut {
    fn schema(&self) -> &ConfigSchema {
        &self.schema
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn episode(
        &mut self,
        config: &EnvConfiguration,
        _seed: u64,
        _run: usize,
    ) -> Result<Episode, ExecutionError> {
        let scenario = self.scenario(config)?;
        let (failure, path) = self.simulate(&scenario);
        Ok(Episode {
            failure,
            trajectory: Trajectory {
                samples: path.into_iter().map(|(x, y)| vec![x, y]).collect(),
            },
        })
    }
}
