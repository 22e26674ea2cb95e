//! Cross-module properties exercised through the public API only.

use proptest::prelude::*;

use smra_core::bits::BitVec;
use smra_core::codec::{decode, offline_encode, EmbeddedBitstream, Transmission};
use smra_core::entropy::{conditional_entropy, multi_conditional_entropy};
use smra_core::graph::NavigationGraph;
use smra_core::ldpca::LdpcaCode;
use smra_core::model::{ChannelSpec, CorrelationModel};
use smra_core::source::SourceEnsemble;
use smra_core::staircase::{StaircaseCode, StaircaseParams};

fn star(
    n: usize,
    seed: u64,
    specs: &[ChannelSpec],
    root_edge: bool,
) -> (SourceEnsemble, NavigationGraph, CorrelationModel) {
    let k = specs.len() as u32 + 1;
    let mut edges = Vec::new();
    let mut model = CorrelationModel::new();
    let mut channels = Vec::new();
    for (i, &spec) in specs.iter().enumerate() {
        let j = i as u32 + 1;
        edges.push((0, j));
        edges.push((j, k));
        model.insert(k, j, spec).unwrap();
        channels.push((j, spec));
    }
    if root_edge {
        edges.push((0, k));
    }
    let graph = NavigationGraph::new(k, &edges).unwrap();
    let ensemble = SourceEnsemble::generate(k, n, seed, &channels).unwrap();
    (ensemble, graph, model)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The parity map is linear over GF(2): encoding a XOR of words gives
    /// the XOR of their encodings.
    #[test]
    fn staircase_parity_is_linear(seed in 0u64..1000, n in 64usize..512) {
        let code = StaircaseCode::new(n, seed, StaircaseParams::default()).unwrap();
        let a = SourceEnsemble::generate(1, n, seed ^ 0xA, &[]).unwrap().x;
        let b = SourceEnsemble::generate(1, n, seed ^ 0xB, &[]).unwrap().x;
        let ab: Vec<u8> = a.iter().zip(&b).map(|(&u, &v)| u ^ v).collect();
        let pa = code.encode(&a).unwrap();
        let pb = code.encode(&b).unwrap();
        let pab = code.encode(&ab).unwrap();
        for i in 0..n {
            prop_assert_eq!(pab.get(i), pa.get(i) ^ pb.get(i));
        }
    }

    /// Stepping the accumulated word back recovers the plain syndrome:
    /// decoding the full stored word is exact for any word.
    #[test]
    fn full_accumulated_word_is_exact(seed in 0u64..1000) {
        let n = 396;
        let code = LdpcaCode::new(n, seed, 66).unwrap();
        let x = SourceEnsemble::generate(1, n, seed ^ 0xF00, &[]).unwrap().x;
        let stored = code.encode(&x).unwrap();
        let junk = vec![0u8; n];
        let out = code.decode(&stored, &junk, 0.49).unwrap();
        prop_assert!(out.recovered());
        prop_assert_eq!(out.x_hat.unwrap(), x);
    }

    /// Conditioning on more side informations never raises the joint
    /// conditional entropy above the best single one.
    #[test]
    fn joint_entropy_is_bounded_by_the_best_single(
        ps in prop::collection::vec(0.01f64..0.49, 1..5),
        erasure in any::<bool>(),
    ) {
        let chs: Vec<ChannelSpec> = ps
            .iter()
            .map(|&p| if erasure { ChannelSpec::Erasure(p) } else { ChannelSpec::Bsc(p) })
            .collect();
        let joint = multi_conditional_entropy(&chs).unwrap();
        let best = chs
            .iter()
            .map(|c| conditional_entropy(c).unwrap())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(joint <= best + 1e-12, "joint {joint} vs best {best}");
        // Appending another channel can only shrink it further.
        let mut wider = chs.clone();
        wider.push(ChannelSpec::Erasure(0.3));
        if chs.iter().all(|c| matches!(c, ChannelSpec::Erasure(_))) {
            let joint_wider = multi_conditional_entropy(&wider).unwrap();
            prop_assert!(joint_wider <= joint + 1e-12);
        }
    }

    /// End-to-end erasure pipeline: extractions nest by rank, every
    /// request decodes to the exact source, and both containers survive
    /// byte round trips.
    #[test]
    fn erasure_pipeline_round_trips(
        seed in 0u64..500,
        n in 200usize..700,
        ps in prop::collection::vec(0.02f64..0.35, 1..4),
        root_edge in any::<bool>(),
        universal in any::<bool>(),
    ) {
        let specs: Vec<ChannelSpec> = ps.iter().map(|&p| ChannelSpec::Erasure(p)).collect();
        let (ens, graph, model) = star(n, seed, &specs, root_edge);
        let (stream, report) = offline_encode(&ens, &graph, &model, universal).unwrap();
        prop_assert!(report.channel_rate_identity_gap() <= 1e-12);

        let mut last: Option<BitVec> = None;
        for marker in &stream.levels {
            let tx = stream.extract(marker.prev_id).unwrap();
            if let Some(prev) = &last {
                prop_assert!(prev.is_bit_prefix_of(&tx.bits));
            }
            let x_hat = decode(&tx, Some(&ens.side_infos[&marker.prev_id])).unwrap();
            prop_assert_eq!(&x_hat, &ens.x);
            let round = Transmission::from_bytes(&tx.to_bytes()).unwrap();
            prop_assert_eq!(&round, &tx);
            last = Some(tx.bits);
        }
        if root_edge {
            let tx = stream.extract(0).unwrap();
            prop_assert_eq!(&decode(&tx, None).unwrap(), &ens.x);
        }
        let back = EmbeddedBitstream::from_bytes(&stream.to_bytes()).unwrap();
        prop_assert_eq!(back, stream);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Same pipeline over the bit-flip code, which pays per-level belief
    /// propagation; fewer cases, same guarantees.
    #[test]
    fn bsc_pipeline_round_trips(
        seed in 0u64..200,
        ps in prop::collection::vec(0.01f64..0.11, 1..3),
        universal in any::<bool>(),
    ) {
        let n = 396;
        let specs: Vec<ChannelSpec> = ps.iter().map(|&p| ChannelSpec::Bsc(p)).collect();
        let (ens, graph, model) = star(n, seed, &specs, false);
        let (stream, report) = offline_encode(&ens, &graph, &model, universal).unwrap();
        prop_assert!(report.channel_rate_identity_gap() <= 1e-12);
        let mut last: Option<BitVec> = None;
        for marker in &stream.levels {
            let tx = stream.extract(marker.prev_id).unwrap();
            if let Some(prev) = &last {
                prop_assert!(prev.is_bit_prefix_of(&tx.bits));
            }
            let x_hat = decode(&tx, Some(&ens.side_infos[&marker.prev_id])).unwrap();
            prop_assert_eq!(&x_hat, &ens.x);
            last = Some(tx.bits);
        }
        let bytes = stream.to_bytes();
        prop_assert_eq!(EmbeddedBitstream::from_bytes(&bytes).unwrap(), stream);
    }
}

/// A level with worse channel entropy can realize a shorter minimal
/// prefix than its predecessor on a lucky draw; segments clamp at zero
/// and the stream still serves both requests.
#[test]
fn lucky_worse_channel_clamps_to_an_empty_segment() {
    // Hunt a seed where the higher-entropy neighbor needs no more bits
    // than the lower-entropy one realized.
    for seed in 0..200u64 {
        let specs = [ChannelSpec::Erasure(0.10), ChannelSpec::Erasure(0.101)];
        let (ens, graph, model) = star(400, seed, &specs, false);
        let (stream, _) = offline_encode(&ens, &graph, &model, false).unwrap();
        assert_eq!(stream.levels[0].prev_id, 1);
        if stream.levels[1].segment_bits == 0 {
            let t1 = stream.extract(1).unwrap();
            let t2 = stream.extract(2).unwrap();
            assert_eq!(t1.bits.len(), t2.bits.len());
            assert_eq!(decode(&t2, Some(&ens.side_infos[&2])).unwrap(), ens.x);
            return;
        }
    }
    panic!("no clamped realization in 200 seeds; the clamp is untested");
}
