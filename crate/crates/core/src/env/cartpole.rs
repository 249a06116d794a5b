use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const X_THRESHOLD: f64 = 2.4;
pub const THETA_THRESHOLD: f64 = 0.2095;

const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

pub(super) fn initial(rng: &mut ChaCha8Rng) -> CartPoleState {
    let mut u = || rng.gen_range(-0.05..=0.05);
    CartPoleState {
        x: u(),
        x_dot: u(),
        theta: u(),
        theta_dot: u(),
    }
}

/// One explicit-Euler step of the cart-pole equations of motion.
pub fn cartpole_update(s: CartPoleState, force: f64) -> CartPoleState {
    let (sin_t, cos_t) = s.theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * s.theta_dot * s.theta_dot * sin_t) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin_t - cos_t * temp)
        / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_t / TOTAL_MASS;
    CartPoleState {
        x: s.x + TAU * s.x_dot,
        x_dot: s.x_dot + TAU * x_acc,
        theta: s.theta + TAU * s.theta_dot,
        theta_dot: s.theta_dot + TAU * theta_acc,
    }
}

/// Cart left the track or the pole fell past the angle limit.
pub fn cartpole_failed(s: &CartPoleState) -> bool {
    s.x.abs() > X_THRESHOLD || s.theta.abs() > THETA_THRESHOLD
}
