//! Paging-triggered random access: one round in detail, then collision
//! statistics against the birthday bound.

use aiot_phy::random_access::{
    AccessMode, DeviceState, OccasionOutcome, PagingMsg, PagingScope, device_handle_msg2,
    device_respond, no_collision_probability, resolve_contention, simulate_round,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> aiot_phy::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let page = PagingMsg::new(
        PagingScope::Group(3),
        AccessMode::ContentionBased { n_occasions: 4 },
    )?;
    let mut devices: Vec<DeviceState> = (0..5)
        .map(|i| DeviceState::new(i, if i < 4 { 3 } else { 1 }, i != 2))
        .collect();
    let mut msg1s = Vec::new();
    for dev in &mut devices {
        match device_respond(dev, &page, &mut rng) {
            Ok(Some(m)) => {
                println!(
                    "device {} sends Msg1 id {:#06x} in occasion {}",
                    dev.device_id, m.random_id, m.occasion
                );
                msg1s.push(m);
            }
            Ok(None) => println!("device {} lacks energy", dev.device_id),
            Err(e) => println!("device {}: {e}", dev.device_id),
        }
    }
    let outcomes = resolve_contention(&msg1s, true);
    for o in &outcomes {
        println!("  {o:?}");
    }
    for dev in devices.iter_mut().filter(|d| d.sent.is_some()) {
        let occasion = dev.sent.unwrap().1;
        let msg2 = outcomes.iter().find_map(|o| match o {
            OccasionOutcome::Success(m) if m.occasion == occasion => Some(*m),
            _ => None,
        });
        let state = device_handle_msg2(dev, msg2.as_ref())?;
        println!("device {} ends {state:?}", dev.device_id);
    }

    println!();
    let rounds = 10_000;
    for (n, k) in [(2, 4), (10, 16), (20, 10), (5, 64)] {
        let page = PagingMsg::contention_based(k)?;
        let free = (0..rounds)
            .filter(|&s| simulate_round(n, &page, 1.0, s).collision_free())
            .count();
        println!(
            "{n:2} devices, {k:2} occasions: collision-free {:.4}, closed form {:.4}",
            free as f64 / rounds as f64,
            no_collision_probability(n, k)
        );
    }
    Ok(())
}
