//! Synthetic trajectories, datasets and global graphs for demos and tests.

use crate::frontend::{prior_covariance, Measurement, MeasurementKind};
use crate::jrl::{Dataset, GlobalEntry, GroundtruthEntry, MeasurementId, SymbolMapping};
use crate::key::Key;
use crate::lie::{Covariance6, Pose3, Tangent6};
use crate::noise::NoiseEstimate;
use crate::seeds::SimRng;
use crate::sync::{StampedPose, SyncError, Trial};
use nalgebra::{Matrix6, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// Constant-speed straight line starting at `start` along `heading` (radians, in the xy plane).
pub fn line(robot: &str, start: [f64; 3], heading: f64, speed: f64, duration: f64, dt: f64) -> Result<Trial, SyncError> {
    let rot = UnitQuaternion::from_euler_angles(0.0, 0.0, heading);
    let dir = rot * Vector3::x();
    let origin = Vector3::from(start);
    sample(robot, duration, dt, |t| Pose3::from_parts(rot, origin + dir * speed * t))
}

/// Counter-clockwise circle in the xy plane with the robot facing along the tangent.
pub fn circle(robot: &str, center: [f64; 3], radius: f64, speed: f64, laps: f64, dt: f64) -> Result<Trial, SyncError> {
    let omega = speed / radius;
    let duration = laps * std::f64::consts::TAU / omega;
    let c = Vector3::from(center);
    sample(robot, duration, dt, |t| {
        let a = omega * t;
        let pos = c + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
        let rot = UnitQuaternion::from_euler_angles(0.0, 0.0, a + std::f64::consts::FRAC_PI_2);
        Pose3::from_parts(rot, pos)
    })
}

/// A robot that never moves.
pub fn stationary(robot: &str, at: [f64; 3], duration: f64, dt: f64) -> Result<Trial, SyncError> {
    let p = Pose3::from_translation(at[0], at[1], at[2]);
    sample(robot, duration, dt, |_| p)
}

fn sample(robot: &str, duration: f64, dt: f64, f: impl Fn(f64) -> Pose3) -> Result<Trial, SyncError> {
    let n = (duration / dt + 1e-9).floor() as usize;
    let poses = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            StampedPose { stamp: t, pose: f(t) }
        })
        .collect();
    Trial::new(robot, poses)
}

fn random_pose<R: Rng>(rng: &mut R, scale: f64) -> Pose3 {
    let v = Tangent6::from_fn(|i, _| {
        let z: f64 = rng.sample(StandardNormal);
        if i < 3 {
            0.5 * z
        } else {
            scale * z
        }
    });
    Pose3::expmap(&v)
}

fn random_covariance<R: Rng>(rng: &mut R) -> Covariance6 {
    let a = Matrix6::from_fn(|_, _| rng.random_range(-0.1..0.1));
    let c = a * a.transpose() + Covariance6::identity() * 1e-6;
    (c + c.transpose()) * 0.5
}

/// A random dataset that satisfies every invariant.
///
/// Each robot gets `2..=max_keyframes` keyframes, a prior, a full odometry
/// chain, some intra-robot loop closures and some inter-robot loop closures.
/// Inter-robot closures are stored with the robot whose keyframe is later
/// (ties: smaller robot id), so partitioning the flattened graph reproduces
/// the same streams.
pub fn random_dataset(seed: u64, robots: usize, max_keyframes: usize) -> Dataset {
    let mut rng = SimRng::seed_from_u64(seed);
    let ids: Vec<String> = (0..robots).map(|i| format!("r{i}")).collect();
    let mut d = Dataset::new(format!("random-{seed}"), ids.clone());
    for id in &ids {
        let n = rng.random_range(2..=max_keyframes.max(2));
        let mut stamp = rng.random_range(0.0..10.0);
        let mut pose = random_pose(&mut rng, 20.0);
        let mut gt = Vec::with_capacity(n);
        for index in 0..n {
            gt.push(GroundtruthEntry { stamp, index, pose });
            stamp += rng.random_range(0.5..3.0);
            pose = pose.compose(&random_pose(&mut rng, 2.0));
        }
        d.groundtruth.insert(id.clone(), gt);
    }
    let gt = d.groundtruth.clone();
    for id in &ids {
        let g = &gt[id];
        let mut stream = vec![Measurement {
            kind: MeasurementKind::Prior,
            from: Key::new(id.clone(), 0),
            to: None,
            value: g[0].pose,
            covariance: prior_covariance(),
            stamp: g[0].stamp,
            injected_outlier: false,
        }];
        for w in g.windows(2) {
            stream.push(Measurement {
                kind: MeasurementKind::Odometry,
                from: Key::new(id.clone(), w[0].index),
                to: Some(Key::new(id.clone(), w[1].index)),
                value: w[0].pose.between(&w[1].pose).compose(&random_pose(&mut rng, 0.01)),
                covariance: random_covariance(&mut rng),
                stamp: w[1].stamp,
                injected_outlier: false,
            });
        }
        if g.len() >= 3 {
            for _ in 0..rng.random_range(0..4) {
                let i = rng.random_range(0..g.len() - 2);
                let j = rng.random_range(i + 2..g.len());
                stream.push(Measurement {
                    kind: MeasurementKind::IntraLc,
                    from: Key::new(id.clone(), i),
                    to: Some(Key::new(id.clone(), j)),
                    value: g[i].pose.between(&g[j].pose).compose(&random_pose(&mut rng, 0.05)),
                    covariance: random_covariance(&mut rng),
                    stamp: g[j].stamp + rng.random_range(0.0..1.0),
                    injected_outlier: rng.random_bool(0.1),
                });
            }
        }
        d.measurements.insert(id.clone(), stream);
    }
    if robots >= 2 {
        for _ in 0..rng.random_range(0..=2 * robots) {
            let a = rng.random_range(0..robots);
            let b = (a + rng.random_range(1..robots)) % robots;
            let (ga, gb) = (&gt[&ids[a]], &gt[&ids[b]]);
            let (i, j) = (rng.random_range(0..ga.len()), rng.random_range(0..gb.len()));
            let (ta, tb) = (ga[i].stamp, gb[j].stamp);
            let owner = if ta > tb || (ta == tb && ids[a] < ids[b]) { &ids[a] } else { &ids[b] };
            let m = Measurement {
                kind: MeasurementKind::InterLc,
                from: Key::new(ids[a].clone(), i),
                to: Some(Key::new(ids[b].clone(), j)),
                value: ga[i].pose.between(&gb[j].pose).compose(&random_pose(&mut rng, 0.05)),
                covariance: random_covariance(&mut rng),
                stamp: ta.max(tb) + rng.random_range(0.0..1.0),
                injected_outlier: false,
            };
            d.measurements.get_mut(owner).expect("owner exists").push(m);
        }
    }
    d.canonicalize();
    let lcs: Vec<MeasurementId> = d
        .iter_measurements()
        .filter(|(_, m)| m.kind.is_loop_closure())
        .map(|(id, _)| id)
        .collect();
    d.outlier_labels = lcs.into_iter().filter(|_| rng.random_bool(0.3)).collect();
    d.noise_models.insert("odometry".into(), NoiseEstimate::fixed(random_covariance(&mut rng)));
    d.metadata.seeds.insert("master".into(), seed);
    d.metadata.offsets = ids.iter().map(|r| (r.clone(), gt[r][0].stamp)).collect();
    d
}

/// Flattens a dataset into a centralized graph with character-tagged keys:
/// robot `i` (in `robots` order) gets tag `'a' + i`.
pub fn global_graph(dataset: &Dataset) -> (Vec<GlobalEntry>, SymbolMapping) {
    let mut mapping = SymbolMapping::default();
    let mut tags = BTreeMap::new();
    for (i, r) in dataset.robots.iter().enumerate() {
        let tag = (b'a' + i as u8) as char;
        mapping.robots.insert(tag, r.clone());
        tags.insert(r.clone(), tag);
    }
    let key = |k: &Key| SymbolMapping::symbol(tags[&k.robot], k.index as u64);
    let entries = dataset
        .iter_measurements()
        .map(|(_, m)| GlobalEntry {
            key1: key(&m.from),
            key2: m.to.as_ref().map(key),
            pose: m.value,
            covariance: m.covariance,
            stamp: m.stamp,
        })
        .collect();
    (entries, mapping)
}
