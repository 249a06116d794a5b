use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FROZEN_LAKE_SIZE: usize = 4;
pub const FROZEN_LAKE_MAP: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

pub(super) fn tile(cell: u8) -> u8 {
    let (r, c) = (cell as usize / FROZEN_LAKE_SIZE, cell as usize % FROZEN_LAKE_SIZE);
    FROZEN_LAKE_MAP[r].as_bytes()[c]
}

/// Deterministic move in direction `dir` (0 left, 1 down, 2 right, 3 up).
pub(crate) fn move_cell(cell: u8, dir: usize) -> u8 {
    let n = FROZEN_LAKE_SIZE as u8;
    let (mut r, mut c) = (cell / n, cell % n);
    match dir {
        0 => c = c.saturating_sub(1),
        1 => r = (r + 1).min(n - 1),
        2 => c = (c + 1).min(n - 1),
        _ => r = r.saturating_sub(1),
    }
    r * n + c
}

/// The three equally likely actual directions for an intended action.
pub(crate) fn slip_directions(action: usize) -> [usize; 3] {
    [(action + 3) % 4, action, (action + 1) % 4]
}

/// (reward, terminal) on arriving in `cell`.
pub(crate) fn outcome(cell: u8) -> (f64, bool) {
    match tile(cell) {
        b'G' => (1.0, true),
        b'H' => (0.0, true),
        _ => (0.0, false),
    }
}

pub(super) fn step(cell: u8, action: usize, rng: &mut ChaCha8Rng) -> (u8, f64, bool) {
    let dir = slip_directions(action)[rng.gen_range(0..3)];
    let next = move_cell(cell, dir);
    let (reward, done) = outcome(next);
    (next, reward, done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn slip_frequencies_are_thirds() {
        // From cell 5's neighbour layout use the interior cell 6 (row 1, col 2):
        // left -> 5, down -> 10, right -> 7, up -> 2, all distinct.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            let (next, _, _) = step(6, 1, &mut rng);
            counts[next as usize] += 1;
        }
        let f = |c: usize| counts[c] as f64 / n as f64;
        // intended down -> 10, perpendicular left -> 5 and right -> 7
        for cell in [10, 5, 7] {
            assert!((f(cell) - 1.0 / 3.0).abs() < 0.01, "cell {cell}: {}", f(cell));
        }
        assert_eq!(counts[2], 0);
    }

    #[test]
    fn map_tiles() {
        assert_eq!(tile(0), b'S');
        assert_eq!(tile(5), b'H');
        assert_eq!(tile(15), b'G');
        assert_eq!(outcome(15), (1.0, true));
        assert_eq!(outcome(12), (0.0, true));
        assert_eq!(outcome(1), (0.0, false));
    }
}
