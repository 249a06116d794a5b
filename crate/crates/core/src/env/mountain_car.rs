use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const CONTINUOUS_GOAL_POSITION: f64 = 0.45;
pub const FORCE: f64 = 0.001;
pub const POWER: f64 = 0.0015;
pub const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

pub(super) fn initial(rng: &mut ChaCha8Rng) -> MountainCarState {
    MountainCarState {
        position: rng.gen_range(-0.6..=-0.4),
        velocity: 0.0,
    }
}

impl MountainCarState {
    fn integrate(self, acceleration: f64) -> MountainCarState {
        let velocity = (self.velocity + acceleration - (3.0 * self.position).cos() * GRAVITY)
            .clamp(-MAX_SPEED, MAX_SPEED);
        let position = (self.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
        let velocity = if position == MIN_POSITION && velocity < 0.0 {
            0.0
        } else {
            velocity
        };
        MountainCarState { position, velocity }
    }

    /// Discrete throttle: 0 = left, 1 = coast, 2 = right.
    pub fn step_discrete(self, action: usize) -> MountainCarState {
        self.integrate((action as f64 - 1.0) * FORCE)
    }

    /// Continuous force, already clamped to [-1, 1].
    pub fn step_continuous(self, force: f64) -> MountainCarState {
        self.integrate(force * POWER)
    }
}
