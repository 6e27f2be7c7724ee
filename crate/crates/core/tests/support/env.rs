//! Environment oracles shared by the env tests and the acceptance run.

use std::sync::Arc;

use bslab_core::env::{Action, Item, PotPhase, StepError, WorldState};
use bslab_core::{parse_layout, reset, step, Layout, Pos, Tile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CRAMPED: &str = "name cramped_room\n##P##\nO  2O\n#1  #\n#D#S#\n";
pub const FORCED: &str = "name forced_coordination\n###P#\nO #2P\nO1# #\nD # #\n###S#\n";
pub const RING: &str = "name coordination_ring\n###P#\n#  1P\nD2# #\nO   #\n#OS##\n";
pub const ASYM: &str = "name asymmetric_advantages\n#########\nO #S#O# S\n#   P   #\n# 2 P 1 #\n###D#D###\n";
pub const CIRCUIT: &str = "name counter_circuit\n###PP###\n#      #\nD #### S\n#2    1#\n###OO###\n";

use Action::{East as E, Interact as I, North as N, South as S, Stay as X, West as W};

/// Blue (seat 0) cooks and delivers one soup alone while green stays put.
///
/// ```text
/// ##P##   pot (2,0)
/// O  2O   onion piles (0,1) (4,1), green at (3,1)
/// #1  #   blue at (1,2)
/// #D#S#   dish pile (1,3), serving (3,3)
/// ```
///
/// t0..5   N W I E N I   walk to (1,1), face the pile, take onion, go to (2,1), face pot, drop  -> 1 onion
/// t6..10  W I E N I                                                                  -> 2 onions
/// t11..15 W I E N I     third onion at t15 starts cooking with timer 20
/// t16..21 W S I N E N   fetch a dish from (1,2) facing south, back to (2,1) facing the pot
/// t22..34 13 × Stay     the timer ticks at the start of t16..t35, reaching 0 in t35
/// t35     I             plate
/// t36..39 S E S I       (2,2), (3,2), face the serving tile, deliver at t39
pub fn blue_script() -> Vec<Action> {
    let mut s = vec![N, W, I, E, N, I];
    for _ in 0..2 {
        s.extend([W, I, E, N, I]);
    }
    s.extend([W, S, I, N, E, N]);
    s.extend([X; 13]);
    s.push(I);
    s.extend([S, E, S, I]);
    s
}

pub const DELIVERY_STEP: usize = 39;

pub fn layout(text: &str, len: u32) -> Arc<Layout> {
    Arc::new(parse_layout(text).unwrap().with_episode_length(len))
}

pub fn scripted_delivery() {
    let l = layout(CRAMPED, 60);
    let script = blue_script();
    assert_eq!(script.len(), DELIVERY_STEP + 1);
    let mut s = reset(&l);
    let mut rewards = Vec::new();
    for (t, &a) in script.iter().enumerate() {
        let out = step(&s, [a, X]).unwrap();
        rewards.push(out.base_reward);
        match t {
            2 => assert_eq!(out.next_state.agents[0].held, Some(Item::Onion)),
            5 => assert_eq!(out.next_state.pots[0].onions, 1),
            15 => {
                assert_eq!(out.next_state.pots[0].phase, PotPhase::Cooking);
                assert_eq!(out.next_state.pots[0].cook_timer, 20);
                assert!(out.events[0].onion_in_pot);
            }
            18 => assert_eq!(out.next_state.agents[0].held, Some(Item::CleanDish)),
            34 => {
                assert_eq!(out.next_state.pots[0].phase, PotPhase::Cooking);
                assert_eq!(out.next_state.pots[0].cook_timer, 1);
            }
            35 => {
                assert!(out.events[0].plated);
                assert_eq!(out.next_state.agents[0].held, Some(Item::SoupDish));
                assert_eq!(out.next_state.pots[0].onions, 0);
            }
            DELIVERY_STEP => {
                assert_eq!(out.next_state.agents[0].position, Pos::new(3, 2));
                assert!(out.events[0].delivered && !out.events[1].delivered);
            }
            _ => {}
        }
        assert_eq!(out.next_state.agents[1].position, Pos::new(3, 1));
        s = out.next_state;
    }
    for (t, r) in rewards.iter().enumerate() {
        let expected = if t == DELIVERY_STEP { [1.0, 1.0] } else { [0.0, 0.0] };
        assert_eq!(*r, expected, "step {t}");
    }
    assert_eq!(rewards.iter().map(|r| r[0]).sum::<f64>(), 1.0);
}


/// Items that exist in the world, by kind.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
struct Census {
    onions_loose: i64,
    clean_dishes: i64,
    soups_loose: i64,
    onions_in_pots: i64,
    soups_in_pots: i64,
}

fn census(s: &WorldState) -> Census {
    let mut c = Census::default();
    let held = s.agents.iter().filter_map(|a| a.held).chain(s.counter_items.iter().map(|ci| ci.item));
    for item in held {
        match item {
            Item::Onion => c.onions_loose += 1,
            Item::CleanDish => c.clean_dishes += 1,
            Item::SoupDish => c.soups_loose += 1,
        }
    }
    for p in &s.pots {
        match p.phase {
            PotPhase::Filling => c.onions_in_pots += p.onions as i64,
            _ => c.soups_in_pots += 1,
        }
    }
    c
}

pub fn fuzz(text: &str, steps: usize, seed: u64, mut check: impl FnMut(&WorldState, &bslab_core::StepOutcome)) {
    let l = layout(text, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = reset(&l);
    for _ in 0..steps {
        if s.is_done() {
            assert_eq!(s.t, 400);
            assert!(matches!(step(&s, [X, X]), Err(StepError::EpisodeDone { t: 400 })));
            s = reset(&l);
        }
        let a = [0, 1].map(|_| Action::from_index(rng.random_range(0..6)).unwrap());
        let out = step(&s, a).unwrap();
        check(&s, &out);
        s = out.next_state;
    }
}

pub fn random_fuzz() {
    for (k, text) in [CRAMPED, RING, FORCED, ASYM, CIRCUIT].into_iter().enumerate() {
        let mut totals = [0u32; 3];
        fuzz(text, 10_000, 100 + k as u64, |before, out| {
            let after = &out.next_state;
            let (b, a) = (census(before), census(after));
            let ev = &out.events;
            let count = |f: fn(&bslab_core::AgentEvents) -> bool| ev.iter().filter(|e| f(e)).count() as i64;
            let (put, plated, delivered) = (count(|e| e.onion_in_pot), count(|e| e.plated), count(|e| e.delivered));
            totals[0] += put as u32;
            totals[1] += plated as u32;
            totals[2] += delivered as u32;

            // soups only leave pots by plating and only leave the world by delivery
            assert_eq!(a.soups_loose, b.soups_loose + plated - delivered);
            let cooked_now = before.pots.iter().zip(&after.pots).filter(|(p, q)| p.phase == PotPhase::Filling && q.phase != PotPhase::Filling).count() as i64;
            assert_eq!(a.soups_in_pots, b.soups_in_pots + cooked_now - plated);
            // onions move into pots one event at a time; a full pot turns three onions into a soup
            assert_eq!(a.onions_in_pots, b.onions_in_pots + put - 3 * cooked_now);
            // loose onions and dishes appear only from their piles
            let from_pile = |item: Item, pile: Tile| {
                (0..2)
                    .filter(|&i| {
                        before.agents[i].held.is_none()
                            && after.agents[i].held == Some(item)
                            && before.layout.tile(before.agents[i].facing()) == pile
                    })
                    .count() as i64
            };
            assert_eq!(a.onions_loose, b.onions_loose - put + from_pile(Item::Onion, Tile::OnionPile));
            assert_eq!(a.clean_dishes, b.clean_dishes - plated + from_pile(Item::CleanDish, Tile::DishPile));

            // rewards: one shared unit per delivery, nothing else
            assert_eq!(out.base_reward, [delivered as f64; 2]);
            for i in 0..2 {
                let (pa, na) = (&before.agents[i], &after.agents[i]);
                if ev[i].onion_in_pot {
                    assert_eq!((pa.held, na.held), (Some(Item::Onion), None));
                    assert_eq!(before.layout.tile(pa.facing()), Tile::Pot);
                }
                if ev[i].plated {
                    assert_eq!((pa.held, na.held), (Some(Item::CleanDish), Some(Item::SoupDish)));
                }
                if ev[i].delivered {
                    assert_eq!((pa.held, na.held), (Some(Item::SoupDish), None));
                    assert_eq!(before.layout.tile(pa.facing()), Tile::DeliveryZone);
                }
                assert!(after.layout.is_floor(na.position));
                assert!(pa.position.manhattan(na.position) <= 1);
            }
            assert_ne!(after.agents[0].position, after.agents[1].position);
            assert_eq!(after.t, before.t + 1);
            assert_eq!(out.done, after.t == 400);
            for pot in &after.pots {
                assert!(pot.onions <= 3);
                assert_eq!(pot.phase == PotPhase::Cooking, pot.cook_timer > 0);
            }
            for w in after.counter_items.windows(2) {
                assert!(w[0].position < w[1].position);
            }
            for ci in &after.counter_items {
                assert_eq!(after.layout.tile(ci.position), Tile::Counter);
            }
        });
        assert!(totals[0] > 0, "fuzz on layout {k} never put an onion in a pot");
    }
}

pub fn replay_is_deterministic() {
    let mut first = Vec::new();
    fuzz(RING, 10_000, 7, |_, out| first.push(out.clone()));
    let mut i = 0;
    fuzz(RING, 10_000, 7, |_, out| {
        assert_eq!(*out, first[i]);
        i += 1;
    });
    assert_eq!(i, 10_000);
}
