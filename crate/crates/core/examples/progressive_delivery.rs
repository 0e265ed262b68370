//! Starts a job server, submits a progressive job and assembles the bundle
//! while scales are still training.
//!
//! cargo run --release --example progressive_delivery

mod common;

use std::time::Duration;

use setgan::bundle::DeliveryMode;
use setgan::client::JobClient;
use setgan::image_io::encode_png;
use setgan::inference::{generate, GenerationRequest};
use setgan::protocol::ServerEvent;
use setgan::server::RunningServer;

fn main() {
    let root = tempfile_dir();
    let server = RunningServer::jobs(&root, "127.0.0.1:0").unwrap();
    println!("server on {}", server.url());
    let client = JobClient::new(server.url()).unwrap();
    let mut config = common::toy_config(40);
    config.worker_count = 2;
    let ticket = client
        .submit(&encode_png(&common::toy_image()).unwrap(), &config, DeliveryMode::Progressive)
        .unwrap();
    let client = client.for_ticket(&ticket);

    let mut bundle = None;
    for ev in client.events(&ticket.job_id, 0).unwrap() {
        let ev = ev.unwrap();
        if let ServerEvent::ScaleReady { scale, .. } = ev.event {
            match &mut bundle {
                None => bundle = Some(client.assemble(&ticket.job_id).unwrap()),
                Some(b) => {
                    client.refresh(b).unwrap();
                }
            }
            let b = bundle.as_ref().unwrap();
            let top = b.scale_count() - 1;
            let y = generate(b, &GenerationRequest::new(top, 0)).unwrap();
            println!("scale {scale} ready: holding {} scales, preview {}x{}", b.scale_count(), y.height, y.width);
        }
        if ev.event.is_final() {
            println!("{:?}", ev.event);
        }
    }
    let st = client.wait(&ticket.job_id, Duration::from_secs(600)).unwrap();
    println!("job {:?}, {} scales published", st.state, st.published);
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = common::out_dir().join("jobs");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
