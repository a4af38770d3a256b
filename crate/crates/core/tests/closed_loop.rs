use gait_perturb::controller::{classify_bin, ControllerConfig, DEFAULT_PULSE_DURATION};
use gait_perturb::segment::{self, SegmentationConfig};
use gait_perturb::sim::{self, GaitProfile, PerChannel, ResponseModel};
use gait_perturb::Channel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(seed: u64, fire_probability: f64) -> sim::InterventionPass {
    let controller = ControllerConfig {
        fire_probability,
        rng_seed: seed,
        ..Default::default()
    };
    sim::simulate_intervention_pass(
        &GaitProfile::default(),
        12,
        100.0,
        controller,
        &ResponseModel::default(),
        &SegmentationConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

#[test]
fn online_strikes_track_ground_truth() {
    let pass = run(1, 1.0);
    assert_eq!(pass.detected_strikes.len(), pass.true_strikes.len());
    for (d, t) in pass.detected_strikes.iter().zip(&pass.true_strikes) {
        assert!((d - t).abs() <= 0.02, "detected {d} vs true {t}");
    }
}

#[test]
fn commands_land_in_their_bin_one_per_cycle() {
    for seed in 0..10 {
        let pass = run(seed, 1.0);
        assert!(!pass.commands.is_empty());
        let mut cycles: Vec<usize> = pass.commands.iter().map(|c| c.cycle_index).collect();
        cycles.dedup();
        assert_eq!(cycles.len(), pass.commands.len());
        for c in &pass.commands {
            assert_eq!(c.duration, DEFAULT_PULSE_DURATION);
            assert_eq!(classify_bin(c.fraction_at_onset).unwrap(), c.bin);
        }
        for w in pass.commands.windows(2) {
            assert!(w[1].onset_t >= w[0].onset_t + w[0].duration);
        }
    }
}

#[test]
fn no_firing_leaves_the_signal_untouched() {
    let pass = run(4, 0.0);
    assert!(pass.commands.is_empty());
    assert!(pass.valves.ticks.iter().all(|(_, m)| m == &[false; 4]));
    let (clean, _) = sim::generate_pass(&GaitProfile::default(), 12, &mut ChaCha8Rng::seed_from_u64(4), 100.0);
    assert_eq!(pass.recording, clean);
}

#[test]
fn zero_noise_pass_segments_into_cycles() {
    let mut profile = GaitProfile::default();
    profile.noise_sigma = PerChannel::default();
    let (rec, truth) = sim::generate_pass(&profile, 12, &mut ChaCha8Rng::seed_from_u64(8), 100.0);
    let seg = segment::segment_recording(&rec, &SegmentationConfig::default()).unwrap();
    assert_eq!(seg.strikes.len(), truth.len());
    assert_eq!(seg.steps.len(), 12 - 2);
    for s in &seg.steps {
        assert!(s.channel(Channel::AngY).iter().any(|&v| v > 50.0));
    }
}
