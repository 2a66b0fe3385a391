//! Paging-triggered random access: device responses, contention resolution
//! at the reader and a single-round simulator.

use std::collections::BTreeMap;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitVec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PagingScope {
    Single(u32),
    Group(u32),
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    ContentionBased { n_occasions: usize },
    ContentionFree { occasion: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PagingMsg {
    pub scope: PagingScope,
    pub mode: AccessMode,
}

impl PagingMsg {
    pub fn new(scope: PagingScope, mode: AccessMode) -> Result<Self> {
        if mode == (AccessMode::ContentionBased { n_occasions: 0 }) {
            return Err(Error::InvalidConfig(
                "at least one access occasion is needed".into(),
            ));
        }
        Ok(Self { scope, mode })
    }

    pub fn contention_based(n_occasions: usize) -> Result<Self> {
        Self::new(
            PagingScope::All,
            AccessMode::ContentionBased { n_occasions },
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Msg1 {
    pub random_id: u16,
    pub occasion: usize,
    pub piggyback_data: Option<BitVec>,
}

/// The reader's echo of a decoded random ID.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Msg2 {
    pub occasion: usize,
    pub random_id: u16,
    /// Whether a further D2R transmission is scheduled.
    pub grant: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaState {
    #[default]
    Idle,
    Energized,
    AwaitingMsg2,
    Resolved,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceState {
    pub device_id: u32,
    pub group_id: u32,
    pub state: RaState,
    pub energy_available: bool,
    /// D2R data sent along with Msg1 when present.
    pub piggyback: Option<BitVec>,
    /// The Msg1 most recently sent.
    pub sent: Option<(u16, usize)>,
}

impl DeviceState {
    pub fn new(device_id: u32, group_id: u32, energy_available: bool) -> Self {
        Self {
            device_id,
            group_id,
            state: RaState::Idle,
            energy_available,
            piggyback: None,
            sent: None,
        }
    }

    fn addressed_by(&self, scope: PagingScope) -> bool {
        match scope {
            PagingScope::Single(id) => id == self.device_id,
            PagingScope::Group(g) => g == self.group_id,
            PagingScope::All => true,
        }
    }
}

/// A paged device's reaction. `None` when it lacks the energy to respond.
pub fn device_respond<R: Rng + ?Sized>(
    dev: &mut DeviceState,
    page: &PagingMsg,
    rng: &mut R,
) -> Result<Option<Msg1>> {
    if !dev.addressed_by(page.scope) {
        return Err(Error::NotAddressed);
    }
    if dev.state == RaState::AwaitingMsg2 {
        return Err(Error::InvalidState(dev.state));
    }
    if !dev.energy_available {
        dev.state = RaState::Idle;
        return Ok(None);
    }
    dev.state = RaState::Energized;
    let occasion = match page.mode {
        AccessMode::ContentionFree { occasion } => occasion,
        AccessMode::ContentionBased { n_occasions } => rng.random_range(0..n_occasions),
    };
    let random_id: u16 = rng.random();
    dev.sent = Some((random_id, occasion));
    dev.state = RaState::AwaitingMsg2;
    Ok(Some(Msg1 {
        random_id,
        occasion,
        piggyback_data: dev.piggyback.clone(),
    }))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccasionOutcome {
    /// A single Msg1, echoed.
    Success(Msg2),
    /// Two or more distinct IDs; nothing is decoded.
    Collision { occasion: usize, n_msg1: usize },
    /// Several devices picked the same ID; the echo resolves all of them.
    FalseSuccess { msg2: Msg2, n_msg1: usize },
}

/// Reader-side handling of the Msg1s received in a round, one outcome per
/// occupied occasion in occasion order.
pub fn resolve_contention(msg1s: &[Msg1], grant: bool) -> Vec<OccasionOutcome> {
    let mut by_occasion: BTreeMap<usize, Vec<u16>> = BTreeMap::new();
    for m in msg1s {
        by_occasion.entry(m.occasion).or_default().push(m.random_id);
    }
    by_occasion
        .into_iter()
        .map(|(occasion, ids)| {
            let msg2 = Msg2 {
                occasion,
                random_id: ids[0],
                grant,
            };
            if ids.len() == 1 {
                OccasionOutcome::Success(msg2)
            } else if ids.iter().all(|&id| id == ids[0]) {
                OccasionOutcome::FalseSuccess {
                    msg2,
                    n_msg1: ids.len(),
                }
            } else {
                OccasionOutcome::Collision {
                    occasion,
                    n_msg1: ids.len(),
                }
            }
        })
        .collect()
}

/// Contention resolution at the device; `None` means no Msg2 arrived in its occasion.
pub fn device_handle_msg2(dev: &mut DeviceState, msg2: Option<&Msg2>) -> Result<RaState> {
    if dev.state != RaState::AwaitingMsg2 {
        return Err(Error::InvalidState(dev.state));
    }
    let matched = match (msg2, dev.sent) {
        (Some(m), Some((id, occ))) => m.random_id == id && m.occasion == occ,
        _ => false,
    };
    dev.state = if matched {
        RaState::Resolved
    } else {
        RaState::Failed
    };
    Ok(dev.state)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundStats {
    pub addressed: usize,
    pub responded: usize,
    /// Devices resolved by a Msg2 carrying their own, unshared ID.
    pub resolved: usize,
    /// Devices whose Msg1 shared an occasion with a different ID.
    pub collided: usize,
    /// Devices resolved by an echo of an ID that another device also sent.
    pub false_success: usize,
    /// Devices that heard a Msg2 in their occasion carrying another ID.
    pub id_mismatch: usize,
    /// Devices whose Msg1 was lost on the air interface.
    pub undecoded: usize,
}

impl RoundStats {
    /// Whether every responding device is accounted for exactly once.
    pub fn is_conserved(&self) -> bool {
        self.responded
            == self.resolved
                + self.collided
                + self.false_success
                + self.id_mismatch
                + self.undecoded
    }

    /// No two responding devices shared an occasion.
    pub fn collision_free(&self) -> bool {
        self.collided == 0 && self.false_success == 0
    }
}

/// One paging round over devices `0..n_devices`, all in group 0. Under a
/// contention-free page, device `i` is assigned occasion `occasion + i`.
pub fn simulate_round(
    n_devices: usize,
    page: &PagingMsg,
    energize_prob: f64,
    seed: u64,
) -> RoundStats {
    simulate_round_with(n_devices, page, energize_prob, seed, |_| true)
}

/// As [`simulate_round`], with `msg1_decoded` deciding whether each otherwise
/// collision-free Msg1 survives the physical layer.
pub fn simulate_round_with(
    n_devices: usize,
    page: &PagingMsg,
    energize_prob: f64,
    seed: u64,
    mut msg1_decoded: impl FnMut(&mut ChaCha8Rng) -> bool,
) -> RoundStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = RoundStats::default();
    let mut devices = Vec::new();
    let mut msg1s = Vec::new();
    for i in 0..n_devices {
        let energized = rng.random::<f64>() < energize_prob;
        let mut dev = DeviceState::new(i as u32, 0, energized);
        let dev_page = match page.mode {
            AccessMode::ContentionFree { occasion } => PagingMsg {
                mode: AccessMode::ContentionFree {
                    occasion: occasion + i,
                },
                ..*page
            },
            AccessMode::ContentionBased { .. } => *page,
        };
        let Ok(reply) = device_respond(&mut dev, &dev_page, &mut rng) else {
            continue;
        };
        stats.addressed += 1;
        if let Some(m) = reply {
            stats.responded += 1;
            msg1s.push(m);
            devices.push(dev);
        }
    }
    let mut echoes: BTreeMap<usize, Msg2> = BTreeMap::new();
    let mut shared: BTreeMap<usize, bool> = BTreeMap::new();
    for outcome in resolve_contention(&msg1s, false) {
        match outcome {
            OccasionOutcome::Success(m) => {
                if msg1_decoded(&mut rng) {
                    echoes.insert(m.occasion, m);
                }
                shared.insert(m.occasion, false);
            }
            OccasionOutcome::FalseSuccess { msg2, .. } => {
                echoes.insert(msg2.occasion, msg2);
                shared.insert(msg2.occasion, true);
            }
            OccasionOutcome::Collision { occasion, .. } => {
                shared.insert(occasion, true);
            }
        }
    }
    for dev in &mut devices {
        let (_, occasion) = dev.sent.expect("responding device sent Msg1");
        let echo = echoes.get(&occasion);
        let state = device_handle_msg2(dev, echo).expect("device awaits Msg2");
        match (state, echo, shared[&occasion]) {
            (RaState::Resolved, _, false) => stats.resolved += 1,
            (RaState::Resolved, _, true) => stats.false_success += 1,
            (_, Some(_), _) => stats.id_mismatch += 1,
            (_, None, true) => stats.collided += 1,
            (_, None, false) => stats.undecoded += 1,
        }
    }
    stats
}

/// Probability that `n` devices choosing uniformly among `k` occasions all differ.
pub fn no_collision_probability(n: usize, k: usize) -> f64 {
    (0..n)
        .map(|i| (1.0 - i as f64 / k as f64).max(0.0))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn contention_free_uses_the_assignment() {
        let mut dev = DeviceState::new(7, 0, true);
        let page = PagingMsg::new(
            PagingScope::Single(7),
            AccessMode::ContentionFree { occasion: 3 },
        )
        .unwrap();
        let m = device_respond(&mut dev, &page, &mut rng())
            .unwrap()
            .unwrap();
        assert_eq!(m.occasion, 3);
        assert_eq!(dev.state, RaState::AwaitingMsg2);
    }

    #[test]
    fn unpowered_and_unaddressed_devices() {
        let page = PagingMsg::contention_based(4).unwrap();
        let mut dead = DeviceState::new(1, 0, false);
        assert_eq!(device_respond(&mut dead, &page, &mut rng()).unwrap(), None);
        assert_eq!(dead.state, RaState::Idle);
        let mut other = DeviceState::new(1, 2, true);
        let group = PagingMsg::new(
            PagingScope::Group(3),
            AccessMode::ContentionBased { n_occasions: 4 },
        )
        .unwrap();
        assert!(matches!(
            device_respond(&mut other, &group, &mut rng()),
            Err(Error::NotAddressed)
        ));
        let single = PagingMsg::new(
            PagingScope::Single(2),
            AccessMode::ContentionBased { n_occasions: 4 },
        )
        .unwrap();
        assert!(matches!(
            device_respond(&mut other, &single, &mut rng()),
            Err(Error::NotAddressed)
        ));
        assert!(PagingMsg::contention_based(0).is_err());
    }

    #[test]
    fn piggyback_rides_on_msg1() {
        let mut dev = DeviceState::new(0, 0, true);
        dev.piggyback = Some(BitVec::from_bits(vec![1, 0, 1]).unwrap());
        let m = device_respond(
            &mut dev,
            &PagingMsg::contention_based(2).unwrap(),
            &mut rng(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(m.piggyback_data, dev.piggyback);
    }

    #[test]
    fn occasions_are_uniform() {
        let page = PagingMsg::contention_based(10).unwrap();
        let mut r = rng();
        let mut hist = [0usize; 10];
        let draws = 100_000;
        for _ in 0..draws {
            let mut dev = DeviceState::new(0, 0, true);
            hist[device_respond(&mut dev, &page, &mut r)
                .unwrap()
                .unwrap()
                .occasion] += 1;
        }
        let e = draws as f64 / 10.0;
        let chi2: f64 = hist.iter().map(|&h| (h as f64 - e).powi(2) / e).sum();
        // chi-square with 9 degrees of freedom: mean 9, sd sqrt(18)
        assert!((chi2 - 9.0).abs() <= 3.0 * 18f64.sqrt(), "chi2 {chi2}");
    }

    fn msg1(id: u16, occasion: usize) -> Msg1 {
        Msg1 {
            random_id: id,
            occasion,
            piggyback_data: None,
        }
    }

    #[test]
    fn contention_outcomes() {
        assert!(matches!(
            resolve_contention(&[msg1(5, 0)], true)[..],
            [OccasionOutcome::Success(Msg2 {
                random_id: 5,
                grant: true,
                ..
            })]
        ));
        assert!(matches!(
            resolve_contention(&[msg1(5, 1), msg1(6, 1)], false)[..],
            [OccasionOutcome::Collision {
                occasion: 1,
                n_msg1: 2
            }]
        ));
        assert!(matches!(
            resolve_contention(&[msg1(5, 1), msg1(5, 1)], false)[..],
            [OccasionOutcome::FalseSuccess { n_msg1: 2, .. }]
        ));
        assert!(resolve_contention(&[], false).is_empty());
    }

    #[test]
    fn msg2_handling() {
        let page = PagingMsg::contention_based(1).unwrap();
        let mut dev = DeviceState::new(0, 0, true);
        let m = device_respond(&mut dev, &page, &mut rng())
            .unwrap()
            .unwrap();
        let mut other = dev.clone();
        let mut silent = dev.clone();
        let own = Msg2 {
            occasion: 0,
            random_id: m.random_id,
            grant: false,
        };
        assert_eq!(
            device_handle_msg2(&mut dev, Some(&own)).unwrap(),
            RaState::Resolved
        );
        let foreign = Msg2 {
            random_id: m.random_id.wrapping_add(1),
            ..own
        };
        assert_eq!(
            device_handle_msg2(&mut other, Some(&foreign)).unwrap(),
            RaState::Failed
        );
        assert_eq!(
            device_handle_msg2(&mut silent, None).unwrap(),
            RaState::Failed
        );
        assert!(matches!(
            device_handle_msg2(&mut dev, None),
            Err(Error::InvalidState(RaState::Resolved))
        ));
        // the reader re-pages a failed device
        assert!(
            device_respond(&mut other, &page, &mut rng())
                .unwrap()
                .is_some()
        );
    }

    #[test]
    fn trivial_rounds() {
        let page = PagingMsg::contention_based(4).unwrap();
        assert_eq!(simulate_round(0, &page, 1.0, 0), RoundStats::default());
        assert_eq!(simulate_round(1, &page, 1.0, 0).resolved, 1);
        let lossy = simulate_round_with(1, &page, 1.0, 0, |_| false);
        assert_eq!((lossy.undecoded, lossy.resolved), (1, 0));
        let single = PagingMsg::new(
            PagingScope::Single(3),
            AccessMode::ContentionBased { n_occasions: 4 },
        )
        .unwrap();
        let s = simulate_round(10, &single, 1.0, 0);
        assert_eq!((s.addressed, s.resolved), (1, 1));
    }

    #[test]
    fn birthday_statistics() {
        let rounds = 10_000;
        for (n, k) in [(2usize, 4usize), (10, 16), (20, 10)] {
            let page = PagingMsg::contention_based(k).unwrap();
            let hits = (0..rounds)
                .filter(|&s| simulate_round(n, &page, 1.0, s as u64).collision_free())
                .count();
            let p = no_collision_probability(n, k);
            let sigma = (p * (1.0 - p) / rounds as f64).sqrt();
            let got = hits as f64 / rounds as f64;
            assert!(
                (got - p).abs() <= 3.0 * sigma + 1e-12,
                "({n},{k}): {got} vs {p}"
            );
        }
    }

    proptest! {
        #[test]
        fn conservation_and_determinism(n in 0usize..40, k in 1usize..20, p in 0.0f64..=1.0, seed in any::<u64>()) {
            let page = PagingMsg::contention_based(k).unwrap();
            let a = simulate_round(n, &page, p, seed);
            prop_assert!(a.is_conserved());
            prop_assert_eq!(a, simulate_round(n, &page, p, seed));
            let lossy = simulate_round_with(n, &page, p, seed, |r| r.random::<f64>() < 0.5);
            prop_assert!(lossy.is_conserved());
        }

        #[test]
        fn contention_free_never_collides(n in 0usize..40, seed in any::<u64>()) {
            let page = PagingMsg::new(PagingScope::All, AccessMode::ContentionFree { occasion: 2 }).unwrap();
            let s = simulate_round(n, &page, 0.7, seed);
            prop_assert!(s.collision_free());
            prop_assert_eq!(s.resolved, s.responded);
        }
    }
}
