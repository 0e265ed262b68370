use std::sync::Arc;

use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reqwest::blocking::Client;
use setgan::bundle::TrainedBundle;
use setgan::edge::{edge_router, EdgeInfo, EdgeState};
use setgan::editor::Mask;
use setgan::gan_models::ScaleModel;
use setgan::image_io;
use setgan::pyramid::{compute_scale_schedule, Dims};
use setgan::server::RunningServer;
use setgan::synthetic;

fn bundle(count: usize) -> TrainedBundle {
    let sched = compute_scale_schedule(Dims::new(60, 60), 60, 25, 4.0 / 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let models = (0..count.min(sched.scale_count))
        .map(|i| ScaleModel::new(i, 0.1, i as u64, &mut rng))
        .collect();
    TrainedBundle::new("edge", "h", sched, 0, 0.85, 0, models, &[]).unwrap()
}

fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn post(c: &Client, url: &str, body: serde_json::Value) -> reqwest::blocking::Response {
    c.post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .unwrap()
}

#[test]
fn edge_runtime_endpoints() {
    let server = RunningServer::start(
        edge_router(Arc::new(EdgeState::new(bundle(2)))),
        "127.0.0.1:0",
    )
    .unwrap();
    let base = server.url();
    let c = Client::new();

    let info: EdgeInfo =
        serde_json::from_slice(&c.get(format!("{base}/edge/info")).send().unwrap().bytes().unwrap())
            .unwrap();
    assert_eq!(info.available_scales, 2);
    assert_eq!(info.normalized_edp.last(), Some(&1.0));
    assert_eq!(info.paint_scales, vec![1]);

    let gen = |seed: u64| {
        post(&c, &format!("{base}/edge/generate"), serde_json::json!({"seed": seed}))
            .bytes()
            .unwrap()
            .to_vec()
    };
    assert_eq!(gen(3), gen(3));
    assert_ne!(gen(3), gen(4));

    // empty mask: the input comes back untouched
    let img = image_io::decode_image(
        &image_io::encode_png(&synthetic::texture(Dims::new(33, 33), 2)).unwrap(),
    )
    .unwrap();
    let png = image_io::encode_png(&img).unwrap();
    let mask = image_io::encode_mask(&Mask::empty(Dims::new(33, 33))).unwrap();
    let resp = post(
        &c,
        &format!("{base}/edge/edit"),
        serde_json::json!({"kind": "editing", "image_base64": b64(&png), "mask_base64": b64(&mask), "at_scale": 1}),
    );
    assert_eq!(resp.status(), 200);
    assert_eq!(image_io::decode_image(&resp.bytes().unwrap()).unwrap(), img);

    // scale outside the editing range is rejected
    let resp = post(
        &c,
        &format!("{base}/edge/edit"),
        serde_json::json!({"kind": "editing", "image_base64": b64(&png), "mask_base64": b64(&mask), "at_scale": 7}),
    );
    assert_eq!(resp.status(), 400);

    // a refreshed bundle unlocks more scales
    let resp = c
        .put(format!("{base}/edge/bundle"))
        .body(bundle(4).serialize())
        .send()
        .unwrap();
    assert_eq!(resp.status(), 200);
    let info: EdgeInfo = serde_json::from_slice(&resp.bytes().unwrap()).unwrap();
    assert_eq!(info.available_scales, 4);
    assert_eq!(info.paint_scales, vec![1, 2]);
    let strictly_up = info.normalized_edp.windows(2).all(|w| w[0] < w[1]);
    assert!(strictly_up, "{:?}", info.normalized_edp);
}
