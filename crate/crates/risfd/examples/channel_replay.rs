//! Serializes a channel drop to JSON and replays it: the round trip is
//! bit-exact, so every downstream rate computation matches exactly.

use risfd::channel::{generate_drop, ChannelSet, RicianParams, ScenarioGeometry, Sizes};
use risfd::fris::initialize;
use risfd::fris::FrisConfig;
use risfd::system::{rates, PowerConfig};

fn main() {
    let sizes = Sizes {
        n_t: 4,
        n_r: 4,
        k: 8,
        m: 3,
        n: 2,
    };
    let ch = generate_drop(
        &ScenarioGeometry::default(),
        &sizes,
        &RicianParams::default(),
        7,
    )
    .expect("channel drop");

    let json = ch.to_json().expect("serialize");
    println!("serialized drop: {} bytes", json.len());
    let replayed = ChannelSet::from_json(&json).expect("deserialize");

    let power = PowerConfig::default();
    // UL QoS is irrelevant to the replay check; disable it so every drop
    // yields a starting point.
    let cfg = FrisConfig {
        gamma_u_db: None,
        ..FrisConfig::default()
    };
    let (w, theta) = initialize(&ch, &power, &cfg, 7).expect("starting point");
    let original = rates(&w, &theta, &ch, &power);
    let replay = rates(&w, &theta, &replayed, &power);
    println!(
        "DL sum rate original {:.12} vs replayed {:.12}",
        original.dl_sum, replay.dl_sum
    );
    assert_eq!(original.dl_sum.to_bits(), replay.dl_sum.to_bits());
    println!("replay is bit-exact");
}
