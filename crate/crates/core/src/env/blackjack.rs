use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Observation;

/// Infinite deck: 1..=9 once each and four 10-valued cards.
pub const DECK: [u8; 13] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 10, 10, 10];

pub fn draw_card(rng: &mut ChaCha8Rng) -> u8 {
    DECK[rng.gen_range(0..DECK.len())]
}

/// A hand summarized by its hard total (aces as 1) and whether it holds an ace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct Hand {
    pub raw: u8,
    pub has_ace: bool,
}

impl Hand {
    pub fn add(mut self, card: u8) -> Hand {
        self.raw += card;
        self.has_ace |= card == 1;
        self
    }

    pub fn usable_ace(&self) -> bool {
        self.has_ace && self.raw + 10 <= 21
    }

    pub fn total(&self) -> u8 {
        if self.usable_ace() {
            self.raw + 10
        } else {
            self.raw
        }
    }

    pub fn is_bust(&self) -> bool {
        self.total() > 21
    }
}

/// Dealer draws until reaching at least 17, standing on soft 17.
pub fn dealer_play(visible: u8, hidden: u8, rng: &mut ChaCha8Rng) -> u8 {
    let mut hand = Hand::default().add(visible).add(hidden);
    while hand.total() < 17 {
        hand = hand.add(draw_card(rng));
    }
    hand.total()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlackjackState {
    pub(crate) player: Hand,
    pub dealer_visible: u8,
    pub dealer_hidden: u8,
}

pub(super) fn initial(rng: &mut ChaCha8Rng) -> BlackjackState {
    let dealer_visible = draw_card(rng);
    let dealer_hidden = draw_card(rng);
    let player = Hand::default().add(draw_card(rng)).add(draw_card(rng));
    BlackjackState {
        player,
        dealer_visible,
        dealer_hidden,
    }
}

impl BlackjackState {
    pub fn observation(&self) -> Observation {
        Observation::Blackjack {
            player_sum: self.player.total(),
            dealer_showing: self.dealer_visible,
            usable_ace: self.player.usable_ace(),
        }
    }

    /// 0 = stick, 1 = hit. Returns (reward, terminated).
    pub fn step(&mut self, action: usize, rng: &mut ChaCha8Rng) -> (f64, bool) {
        if action == 1 {
            self.player = self.player.add(draw_card(rng));
            if self.player.is_bust() {
                (-1.0, true)
            } else {
                (0.0, false)
            }
        } else {
            let dealer = dealer_play(self.dealer_visible, self.dealer_hidden, rng);
            let score = |t: u8| if t > 21 { 0 } else { t };
            let reward = match score(self.player.total()).cmp(&score(dealer)) {
                Ordering::Greater => 1.0,
                Ordering::Less => -1.0,
                Ordering::Equal => 0.0,
            };
            (reward, true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, Action, EnvId};
    use rand::SeedableRng;

    #[test]
    fn dealer_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dealer_play(10, 7, &mut rng), 17);
        assert_eq!(dealer_play(1, 6, &mut rng), 17);
    }

    /// Exact final-sum distribution by recursion over the draw distribution.
    fn dealer_oracle(hand: Hand, p: f64, out: &mut [f64; 32]) {
        if hand.total() >= 17 {
            out[hand.total() as usize] += p;
            return;
        }
        for &c in DECK.iter() {
            dealer_oracle(hand.add(c), p / DECK.len() as f64, out);
        }
    }

    #[test]
    fn dealer_distribution_matches_enumeration() {
        let mut exact = [0.0; 32];
        dealer_oracle(Hand::default().add(10).add(6), 1.0, &mut exact);
        let total: f64 = exact.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        let mut counts = [0usize; 32];
        for _ in 0..n {
            counts[dealer_play(10, 6, &mut rng) as usize] += 1;
        }
        for s in 17..32 {
            let emp = counts[s] as f64 / n as f64;
            assert!((emp - exact[s]).abs() < 0.01, "sum {s}: {emp} vs {}", exact[s]);
        }
    }

    #[test]
    fn usable_ace_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..500 {
            let (mut env, obs) = reset(EnvId::Blackjack, seed, 200).unwrap();
            let mut obs = obs;
            loop {
                if let Observation::Blackjack {
                    player_sum,
                    usable_ace,
                    dealer_showing,
                } = obs
                {
                    assert!((4..=31).contains(&player_sum));
                    assert!((1..=10).contains(&dealer_showing));
                    if usable_ace {
                        assert!(player_sum <= 21 && player_sum >= 12);
                    }
                }
                let r = env.step(Action::Discrete(rng.gen_range(0..2))).unwrap();
                obs = r.observation;
                if r.done() {
                    break;
                }
            }
        }
    }

    #[test]
    fn bust_after_hit_loses() {
        let state = BlackjackState {
            player: Hand { raw: 20, has_ace: false },
            dealer_visible: 10,
            dealer_hidden: 7,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut busts = 0;
        for _ in 0..50 {
            let mut s = state;
            let (reward, done) = s.step(1, &mut rng);
            if s.player.total() > 21 {
                busts += 1;
                assert_eq!((reward, done), (-1.0, true));
            } else {
                assert_eq!((reward, done), (0.0, false));
            }
        }
        assert!(busts > 0);
    }
}
