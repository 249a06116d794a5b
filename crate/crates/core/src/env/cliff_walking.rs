pub const ROWS: u8 = 4;
pub const COLS: u8 = 12;
pub const CLIFF_START: (u8, u8) = (3, 0);
pub const CLIFF_GOAL: (u8, u8) = (3, 11);

pub fn is_cliff(row: u8, col: u8) -> bool {
    row == 3 && (1..=10).contains(&col)
}

/// Actions: 0 up, 1 right, 2 down, 3 left. Entering the cliff costs -100 and
/// sends the player back to the start without ending the episode.
pub(crate) fn step(row: u8, col: u8, action: usize) -> (u8, u8, f64, bool) {
    let (r, c) = match action {
        0 => (row.saturating_sub(1), col),
        1 => (row, (col + 1).min(COLS - 1)),
        2 => ((row + 1).min(ROWS - 1), col),
        _ => (row, col.saturating_sub(1)),
    };
    if is_cliff(r, c) {
        (CLIFF_START.0, CLIFF_START.1, -100.0, false)
    } else {
        (r, c, -1.0, (r, c) == CLIFF_GOAL)
    }
}
