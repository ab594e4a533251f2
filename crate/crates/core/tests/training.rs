use tann::baselines::{embed_in_trie, make_comparison_config, ArchKind, ArchSpec};
use tann::data::{gate_dataset, Dataset, Gate, Sample};
use tann::nn::{Activation, Layer, LossKind, Network, OptimizerKind};
use tann::train::*;
use tann::trie::{build_trie, NodeId, RoutingPolicy, Trie};

fn bits(trie: &Trie, id: usize) -> Vec<u64> {
    trie.nodes()[id]
        .net
        .params_flat()
        .iter()
        .map(|v| v.to_bits())
        .collect()
}

#[test]
fn route_local_leaves_unserved_nodes_untouched() {
    let trie = build_trie(2, 6, 3, 4);
    let before = trie.clone();
    let one = Dataset::new(
        vec![Sample {
            features: vec![1.0, 0.0],
            label: 1,
        }],
        2,
    )
    .unwrap();
    let served = trie
        .leaf_of(&[1.0, 0.0], &RoutingPolicy::BitConsume)
        .unwrap();
    let report = train_tann(
        trie,
        &one,
        &TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    for id in 0..before.len() {
        let same = bits(&report.model, id) == bits(&before, id);
        assert_eq!(same, id != served.0, "node {id}");
    }
}

#[test]
fn global_step_matches_route_local_until_moments_exist() {
    let one = Dataset::new(
        vec![Sample {
            features: vec![0.0, 1.0],
            label: 1,
        }],
        2,
    )
    .unwrap();
    let local = TrainConfig::default();
    let global = TrainConfig {
        step_mode: StepMode::GlobalStep,
        ..local.clone()
    };
    let a = train_tann(build_trie(2, 8, 3, 2), &one, &local).unwrap();
    let b = train_tann(build_trie(2, 8, 3, 2), &one, &global).unwrap();
    assert_eq!(a.model, b.model);

    // Once several nodes hold Adam moments, zero-gradient steps keep moving them.
    let xor = gate_dataset(Gate::Xor);
    let a = train_tann(build_trie(2, 8, 3, 2), &xor, &local).unwrap();
    let b = train_tann(build_trie(2, 8, 3, 2), &xor, &global).unwrap();
    assert_ne!(a.model, b.model);
}

#[test]
fn training_is_deterministic_and_loss_bookkeeping_is_consistent() {
    let xor = gate_dataset(Gate::Xor);
    let cfg = TrainConfig {
        epochs: 7,
        seed: 3,
        shuffle: true,
        ..TrainConfig::default()
    };
    let a = train_tann(build_trie(2, 20, 3, 3), &xor, &cfg).unwrap();
    let b = train_tann(build_trie(2, 20, 3, 3), &xor, &cfg).unwrap();
    assert_eq!(a.epochs, b.epochs);
    assert_eq!(a.model, b.model);

    assert_eq!(a.epochs.len(), 7);
    assert_eq!(
        a.epochs.iter().map(|r| r.epoch).collect::<Vec<_>>(),
        (1..=7).collect::<Vec<_>>()
    );
    let last = a.epochs.last().unwrap();
    let mean = a.last_epoch_losses.iter().sum::<f64>() / a.last_epoch_losses.len() as f64;
    assert_eq!(last.mean_loss, mean);
    assert_eq!(last.last_loss, *a.last_epoch_losses.last().unwrap());
    for r in &a.epochs {
        assert_eq!(r.samples_per_leaf.len(), 4);
        assert!(r.samples_per_leaf.values().all(|&c| c == 1));
        assert!(r.samples_per_leaf.keys().all(|&id| a.model.is_leaf(id)));
    }
}

#[test]
fn xor_is_learned_by_a_depth_three_trie() {
    let xor = gate_dataset(Gate::Xor);
    let cfg = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let report = train_tann(build_trie(2, 20, 3, 1), &xor, &cfg).unwrap();
    let m = evaluate(&report.model, &xor, &RoutingPolicy::BitConsume, 0.5).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert!(report.epochs[0].mean_loss > report.final_mean_loss());
}

#[test]
fn shallow_tries_stop_at_internal_nodes() {
    // Two bits reach the third level (depth index 2); deeper levels never serve gate inputs.
    let xor = gate_dataset(Gate::Xor);
    let report = train_tann(build_trie(2, 4, 5, 1), &xor, &TrainConfig::default()).unwrap();
    let depths = report.model.node_depths();
    for id in report.epochs[0].samples_per_leaf.keys() {
        assert_eq!(depths[id.0], 2);
    }
}

fn ce_trie(depth: usize, seed: u64) -> Trie {
    Trie::build_with(depth, seed, |s| {
        Network::new(
            2,
            vec![
                Layer::dense(2, 3),
                Layer::Activation(Activation::Relu),
                Layer::dense(3, 2),
            ],
            LossKind::CrossEntropy,
        )
        .unwrap()
        .initialized(s)
    })
}

#[test]
fn unit_batches_reproduce_online_training() {
    let xor = gate_dataset(Gate::Xor);
    let cfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        epochs: 5,
        shuffle: true,
        ..TrainConfig::default()
    };
    let online = train_tann(ce_trie(2, 5), &xor, &cfg).unwrap();
    let batched = train_tann_batched(ce_trie(2, 5), &xor, &cfg).unwrap();
    assert_eq!(online.epochs, batched.epochs);
    assert_eq!(online.model, batched.model);
}

#[test]
fn batches_average_gradients_per_node() {
    let xor = gate_dataset(Gate::Xor);
    let cfg = TrainConfig {
        loss: LossKind::CrossEntropy,
        optimizer: OptimizerKind::Sgd,
        lr: 0.5,
        batch_size: 4,
        epochs: 1,
        ..TrainConfig::default()
    };
    // A depth-one trie sends everything to the root, so one batch is one
    // averaged step of a standalone network.
    let trie = train_tann_batched(ce_trie(1, 9), &xor, &cfg).unwrap();
    let net = ce_trie(1, 9).nodes()[0].net.clone();
    let single = train_single(net, &xor, &cfg).unwrap();
    let a = trie.model.nodes()[0].net.params_flat();
    let b = single.model.params_flat();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-15);
    }
    assert_eq!(trie.epochs[0].samples_per_leaf[&NodeId(0)], 4);
}

#[test]
fn comparison_architectures_train_standalone_and_embedded() {
    let xor = gate_dataset(Gate::Xor);
    for kind in ArchKind::GATE_KINDS {
        let spec = ArchSpec::gate(kind);
        let cfg = make_comparison_config(kind).unwrap();
        let alone =
            train_single(tann::baselines::make_network(&spec, 1).unwrap(), &xor, &cfg).unwrap();
        let trie = train_tann(embed_in_trie(&spec, 3, 1).unwrap(), &xor, &cfg).unwrap();
        for loss in [alone.final_mean_loss(), trie.final_mean_loss()] {
            assert!(loss.is_finite(), "{kind}");
        }
        assert!(evaluate(&trie.model, &xor, &RoutingPolicy::BitConsume, 0.5).is_ok());
        assert!(evaluate(&alone.model, &xor, &RoutingPolicy::BitConsume, 0.5).is_ok());
    }
}
