//! Serve a synthetic annotation session on port 8787.
//!
//! With `--auto` a scripted annotator answers every request from ground
//! truth over plain HTTP; otherwise label by hand, e.g.
//!
//! ```text
//! curl localhost:8787/api/requests/next
//! curl -X POST localhost:8787/api/requests/p01-c0-t17/label -H 'content-type: application/json' -d '{"label_id": 2}'
//! ```

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::thread;
use std::time::Duration;

use weakanno::annotate::{find_centroids, propagate, Threshold};
use weakanno::gmm::{assign, fit, GmmConfig};
use weakanno::session::AnnotationSession;
use weakanno::synth::{embedding_suite, label_names, EmbeddingSuiteConfig};
use weakanno_annoserve::{run_blocking, SessionHandle, DEFAULT_PORT};

fn http(addr: SocketAddr, method: &str, path: &str, body: &str) -> std::io::Result<(u16, String)> {
    let mut stream = TcpStream::connect(addr)?;
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    let status = response[9..12].parse().unwrap_or(0);
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Ok((status, body))
}

fn field<'a>(json: &'a str, key: &str) -> Option<&'a str> {
    let start = json.find(&format!("\"{key}\":"))? + key.len() + 3;
    let rest = json[start..].trim_start_matches('"');
    let end = rest.find(['"', ',', '}'])?;
    Some(&rest[..end])
}

fn main() -> weakanno::error::Result<()> {
    let auto = std::env::args().any(|a| a == "--auto");
    let mut suite = EmbeddingSuiteConfig::default().with_seed(9);
    suite.participants = 1;
    suite.clips = 500;
    suite.num_classes = 5;
    let p = embedding_suite(&suite)?.remove(0);
    let data = p.embeddings.to_f64();
    let model = fit(data.view(), &GmmConfig::new(8, 0))?;
    let assignment = assign(&model, data.view())?;
    let centroids = find_centroids(&model, &assignment);

    let mut session = AnnotationSession::in_memory("demo", "p01", label_names(5)).with_media_template("{participant}/{clip}.mp4");
    session.enqueue_requests(&centroids, p.embeddings.spans())?;
    let handle = SessionHandle::new(session);
    let addr = SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT));
    println!("serving {} requests on http://{addr}", handle.lock().pending().len());

    if auto {
        let truth = p.ground_truth.clone();
        thread::spawn(move || {
            thread::sleep(Duration::from_millis(200));
            while let Ok((200, body)) = http(addr, "GET", "/api/requests/next", "") {
                let id = field(&body, "request_id").unwrap().to_string();
                let clip: usize = field(&body, "clip_index").unwrap().parse().unwrap();
                let (status, _) = http(addr, "POST", &format!("/api/requests/{id}/label"), &format!("{{\"label_id\": {}}}", truth[clip]))
                    .expect("server reachable");
                println!("{id} -> {} ({status})", truth[clip]);
            }
        });
    }
    run_blocking(handle.clone(), addr, None).map_err(|e| weakanno::error::Error::Config(e.to_string()))?;

    let labels = handle.lock().close();
    let weak = propagate(&assignment, &labels, &p.embeddings, &centroids, Threshold::NONE)?;
    let correct = weak.clips.iter().zip(&p.ground_truth).filter(|(w, &g)| w.label == g).count();
    println!("all clusters labeled; {correct} of {} clips correct after propagation", weak.len());
    Ok(())
}
