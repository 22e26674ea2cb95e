use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use smra_core::codec::{decode, offline_encode, online_extract, Transmission};
use smra_core::graph::NavigationGraph;
use smra_core::model::{ChannelSpec, CorrelationModel};
use smra_core::source::{to_raw_bytes, SourceEnsemble};
use smra_server::{AppState, RecordingVfs, ServiceConfig, StdVfs, Vfs};

const N: usize = 400;
const SEED: u64 = 9;

fn fixture_config() -> ServiceConfig {
    let graph =
        NavigationGraph::new(3, &[(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)]).unwrap();
    let mut model = CorrelationModel::new();
    model.insert(3, 1, ChannelSpec::Erasure(0.08)).unwrap();
    model.insert(3, 2, ChannelSpec::Erasure(0.2)).unwrap();
    ServiceConfig { graph, model, n: N, universal: false }
}

fn fixture_ensemble() -> SourceEnsemble {
    SourceEnsemble::generate(
        3,
        N,
        SEED,
        &[(1, ChannelSpec::Erasure(0.08)), (2, ChannelSpec::Erasure(0.2))],
    )
    .unwrap()
}

async fn start(data_dir: &Path, vfs: Arc<dyn Vfs>) -> (String, Arc<AppState>) {
    let state = AppState::open(fixture_config(), data_dir, vfs).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    let serve_state = state.clone();
    tokio::spawn(async move {
        smra_server::serve(listener, serve_state).await.unwrap();
    });
    (format!("http://{addr}"), state)
}

async fn put_all(client: &reqwest::Client, base: &str, ens: &SourceEnsemble) {
    for (id, word) in [(1u32, &ens.side_infos[&1]), (2, &ens.side_infos[&2]), (3, &ens.x)] {
        let resp = client
            .put(format!("{base}/v1/sources/{id}"))
            .body(to_raw_bytes(word).unwrap())
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201, "put source {id}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn http_round_trip_matches_the_local_library() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _state) = start(dir.path(), Arc::new(StdVfs)).await;
    let client = reqwest::Client::new();
    let ens = fixture_ensemble();
    put_all(&client, &base, &ens).await;

    let config = fixture_config();
    let local_ens = SourceEnsemble {
        source_id: 3,
        n: N,
        x: ens.x.clone(),
        side_infos: ens.side_infos.clone(),
        seed: 0,
    };
    let (stream, report) =
        offline_encode(&local_ens, &config.graph, &config.model, false).unwrap();
    let local_report = serde_json::to_vec_pretty(&report).unwrap();

    let resp = client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.bytes().await.unwrap().as_ref(), &local_report[..]);

    for prev in [0u32, 1, 2] {
        let resp = client
            .get(format!("{base}/v1/extract/3?prev={prev}"))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 200, "extract prev {prev}");
        let expected = online_extract(&stream, prev).unwrap();
        assert_eq!(
            resp.headers()["x-level"].to_str().unwrap(),
            expected.level_rank.to_string()
        );
        assert_eq!(
            resp.headers()["x-bits"].to_str().unwrap(),
            expected.bits.len().to_string()
        );
        let body = resp.bytes().await.unwrap();
        assert_eq!(body.as_ref(), &expected.to_bytes()[..], "bytes for prev {prev}");

        let tx = Transmission::from_bytes(&body).unwrap();
        let y = if prev == 0 { None } else { Some(&ens.side_infos[&prev]) };
        assert_eq!(decode(&tx, y.map(|v| v.as_slice())).unwrap(), ens.x);
    }

    let resp = client.get(format!("{base}/v1/report/3")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.bytes().await.unwrap().as_ref(), &local_report[..]);

    let resp = client.get(format!("{base}/v1/bounds/3")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let bound: serde_json::Value =
        serde_json::from_slice(&resp.bytes().await.unwrap()).unwrap();
    assert_eq!(bound["ordering"], serde_json::json!([1, 2, 0]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn status_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _state) = start(dir.path(), Arc::new(StdVfs)).await;
    let client = reqwest::Client::new();
    let ens = fixture_ensemble();

    let garbage = client
        .put(format!("{base}/v1/sources/1"))
        .body(vec![0xff, 0x01])
        .send()
        .await
        .unwrap();
    assert_eq!(garbage.status(), 400);

    let wrong_n = client
        .put(format!("{base}/v1/sources/1"))
        .body(to_raw_bytes(&vec![0u8; 200]).unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(wrong_n.status(), 400);

    for bad_id in [0u32, 9] {
        let resp = client
            .put(format!("{base}/v1/sources/{bad_id}"))
            .body(to_raw_bytes(&ens.x).unwrap())
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 400, "id {bad_id} is outside the graph");
    }

    let resp = client
        .put(format!("{base}/v1/sources/3"))
        .body(to_raw_bytes(&ens.x).unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    let resp = client
        .put(format!("{base}/v1/sources/3"))
        .body(to_raw_bytes(&ens.x).unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 409, "stored sources are immutable");

    let resp = client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    let body: serde_json::Value = serde_json::from_slice(&resp.bytes().await.unwrap()).unwrap();
    assert_eq!(body["missing"], serde_json::json!([1, 2]));

    let resp = client.get(format!("{base}/v1/extract/3?prev=1")).send().await.unwrap();
    assert_eq!(resp.status(), 412, "stored but not encoded");
    let resp = client.get(format!("{base}/v1/report/3")).send().await.unwrap();
    assert_eq!(resp.status(), 404);

    let resp = client.get(format!("{base}/v1/extract/9?prev=1")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    let resp = client.get(format!("{base}/v1/extract/3?prev=7")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    let resp = client.get(format!("{base}/v1/bounds/9")).send().await.unwrap();
    assert_eq!(resp.status(), 404);
    let resp = client.get(format!("{base}/v1/bounds/3")).send().await.unwrap();
    assert_eq!(resp.status(), 200, "bounds need no stored data");

    let resp = client.post(format!("{base}/v1/encode/9")).send().await.unwrap();
    assert_eq!(resp.status(), 404);

    for (id, word) in [(1u32, &ens.side_infos[&1]), (2, &ens.side_infos[&2])] {
        client
            .put(format!("{base}/v1/sources/{id}"))
            .body(to_raw_bytes(word).unwrap())
            .send()
            .await
            .unwrap();
    }
    let resp = client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let resp = client.get(format!("{base}/v1/extract/3?prev=1")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn re_encode_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _state) = start(dir.path(), Arc::new(StdVfs)).await;
    let client = reqwest::Client::new();
    put_all(&client, &base, &fixture_ensemble()).await;

    let first = client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
    assert_eq!(first.status(), 200);
    let first_body = first.bytes().await.unwrap();
    let stream_before = std::fs::read(dir.path().join("streams/3.smra")).unwrap();

    let second = client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
    assert_eq!(second.status(), 200);
    assert_eq!(second.bytes().await.unwrap(), first_body);
    assert_eq!(std::fs::read(dir.path().join("streams/3.smra")).unwrap(), stream_before);

    let index: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("index.json")).unwrap()).unwrap();
    let crc = index["sources"]["3"]["encoded"]["stream_crc32"].as_u64().unwrap();
    assert_eq!(crc, smra_core::bits::crc32(&stream_before) as u64);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_extracts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _state) = start(dir.path(), Arc::new(StdVfs)).await;
    let client = reqwest::Client::new();
    put_all(&client, &base, &fixture_ensemble()).await;
    client.post(format!("{base}/v1/encode/3")).send().await.unwrap();

    let mut expected = Vec::new();
    for prev in [0u32, 1, 2] {
        let resp =
            client.get(format!("{base}/v1/extract/3?prev={prev}")).send().await.unwrap();
        expected.push(resp.bytes().await.unwrap());
    }

    let mut tasks = Vec::new();
    for round in 0..8 {
        for (i, prev) in [0u32, 1, 2].into_iter().enumerate() {
            let client = client.clone();
            let url = format!("{base}/v1/extract/3?prev={prev}");
            let want = expected[i].clone();
            tasks.push(tokio::spawn(async move {
                let resp = client.get(&url).send().await.unwrap();
                assert_eq!(resp.status(), 200, "round {round} prev {prev}");
                assert_eq!(resp.bytes().await.unwrap(), want);
            }));
        }
    }
    for task in tasks {
        task.await.unwrap();
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn extraction_never_reads_raw_sources() {
    let dir = tempfile::tempdir().unwrap();
    let vfs = Arc::new(RecordingVfs::new(StdVfs));
    let (base, _state) = start(dir.path(), vfs.clone()).await;
    let client = reqwest::Client::new();
    put_all(&client, &base, &fixture_ensemble()).await;
    client.post(format!("{base}/v1/encode/3")).send().await.unwrap();

    vfs.clear();
    for prev in [0u32, 1, 2, 1, 0] {
        let resp =
            client.get(format!("{base}/v1/extract/3?prev={prev}")).send().await.unwrap();
        assert_eq!(resp.status(), 200);
        resp.bytes().await.unwrap();
    }
    let reads = vfs.reads();
    assert!(!reads.is_empty(), "extraction reads the stored stream");
    for path in &reads {
        let name = path.to_string_lossy();
        assert!(
            !name.contains("sources"),
            "extract handler touched a raw source file: {name}"
        );
        assert!(name.ends_with("3.smra"), "unexpected read: {name}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn restart_serves_the_same_store() {
    let dir = tempfile::tempdir().unwrap();
    let ens = fixture_ensemble();
    let first_extract;
    {
        let (base, _state) = start(dir.path(), Arc::new(StdVfs)).await;
        let client = reqwest::Client::new();
        put_all(&client, &base, &ens).await;
        client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
        let resp =
            client.get(format!("{base}/v1/extract/3?prev=2")).send().await.unwrap();
        first_extract = resp.bytes().await.unwrap();
    }

    let (base, _state) = start(dir.path(), Arc::new(StdVfs)).await;
    let client = reqwest::Client::new();
    let resp = client
        .put(format!("{base}/v1/sources/3"))
        .body(to_raw_bytes(&ens.x).unwrap())
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 409, "index survives a restart");
    let resp = client.get(format!("{base}/v1/extract/3?prev=2")).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert_eq!(resp.bytes().await.unwrap(), first_extract);
    let resp = client.post(format!("{base}/v1/encode/3")).send().await.unwrap();
    assert_eq!(resp.status(), 200, "re-encode after restart is a cache hit");
}
