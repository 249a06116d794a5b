use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Landmark, Observation, PassengerLoc};

/// Interior rows of the 5x5 taxi map; `|` marks a wall, `:` a passable border.
const MAP: [&str; 5] = [
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
];

/// Landmark coordinates (row, col) in R, G, Y, B order.
pub const TAXI_LANDMARKS: [(u8, u8); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiState {
    pub row: u8,
    pub col: u8,
    pub passenger: PassengerLoc,
    pub destination: Landmark,
}

/// Whether a horizontal move from `(row, col)` is possible. `east` selects the
/// direction.
pub fn taxi_move_allowed(row: u8, col: u8, east: bool) -> bool {
    let line = MAP[row as usize].as_bytes();
    let idx = if east { 2 * col as usize + 2 } else { 2 * col as usize };
    line[idx] == b':'
}

pub(super) fn initial(rng: &mut ChaCha8Rng) -> TaxiState {
    let row = rng.gen_range(0..5u8);
    let col = rng.gen_range(0..5u8);
    let pass = rng.gen_range(0..4usize);
    let mut dest = rng.gen_range(0..3usize);
    if dest >= pass {
        dest += 1;
    }
    TaxiState {
        row,
        col,
        passenger: PassengerLoc::from_index(pass).expect("landmark index"),
        destination: Landmark::from_index(dest).expect("landmark index"),
    }
}

impl TaxiState {
    pub fn observation(&self) -> Observation {
        Observation::Taxi {
            row: self.row,
            col: self.col,
            passenger: self.passenger,
            destination: self.destination,
        }
    }

    /// Flat index in `0..500`.
    pub fn index(&self) -> usize {
        ((self.row as usize * 5 + self.col as usize) * 5 + self.passenger.index()) * 4
            + self.destination.index()
    }

    pub fn from_index(i: usize) -> TaxiState {
        let dest = i % 4;
        let pass = (i / 4) % 5;
        let col = (i / 20) % 5;
        let row = i / 100;
        TaxiState {
            row: row as u8,
            col: col as u8,
            passenger: PassengerLoc::from_index(pass).expect("passenger index"),
            destination: Landmark::from_index(dest).expect("landmark index"),
        }
    }

    fn landmark_here(&self) -> Option<Landmark> {
        TAXI_LANDMARKS
            .iter()
            .position(|&(r, c)| (r, c) == (self.row, self.col))
            .and_then(Landmark::from_index)
    }

    /// Deterministic transition. Actions: 0 south, 1 north, 2 east, 3 west,
    /// 4 pickup, 5 dropoff. Returns (reward, terminated).
    pub fn step(&mut self, action: usize) -> (f64, bool) {
        let mut reward = -1.0;
        let mut done = false;
        match action {
            0 => self.row = (self.row + 1).min(4),
            1 => self.row = self.row.saturating_sub(1),
            2 => {
                if taxi_move_allowed(self.row, self.col, true) {
                    self.col += 1;
                }
            }
            3 => {
                if taxi_move_allowed(self.row, self.col, false) {
                    self.col -= 1;
                }
            }
            4 => match self.passenger.landmark() {
                Some(lm) if self.landmark_here() == Some(lm) => {
                    self.passenger = PassengerLoc::InTaxi;
                }
                _ => reward = -10.0,
            },
            _ => {
                let here = self.landmark_here();
                if self.passenger == PassengerLoc::InTaxi && here == Some(self.destination) {
                    self.passenger = PassengerLoc::from_index(self.destination.index())
                        .expect("landmark index");
                    reward = 20.0;
                    done = true;
                } else if let (PassengerLoc::InTaxi, Some(lm)) = (self.passenger, here) {
                    self.passenger =
                        PassengerLoc::from_index(lm.index()).expect("landmark index");
                } else {
                    reward = -10.0;
                }
            }
        }
        (reward, done)
    }
}
