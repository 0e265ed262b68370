//! Serves a bundle to a local editing front end and calls it once.
//!
//! cargo run --release --example edge_runtime

mod common;

use std::sync::Arc;

use setgan::edge::{edge_router, EdgeInfo, EdgeState};
use setgan::server::RunningServer;

fn main() {
    let bundle = common::toy_bundle(20);
    let server = RunningServer::start(edge_router(Arc::new(EdgeState::new(bundle))), "127.0.0.1:0").unwrap();
    let http = reqwest::blocking::Client::new();
    let info: EdgeInfo = serde_json::from_slice(
        &http.get(format!("{}/edge/info", server.url())).send().unwrap().bytes().unwrap(),
    )
    .unwrap();
    println!("{} scales, normalized EDP {:?}", info.available_scales, info.normalized_edp);
    let png = http
        .post(format!("{}/edge/generate", server.url()))
        .header("content-type", "application/json")
        .body(r#"{"seed": 5}"#)
        .send()
        .unwrap()
        .bytes()
        .unwrap();
    let path = common::out_dir().join("edge_sample.png");
    std::fs::write(&path, &png).unwrap();
    println!("wrote {} ({} bytes)", path.display(), png.len());
}
