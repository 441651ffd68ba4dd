use std::io::{BufRead, BufReader, Cursor, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use mcp_fidelity::mcp::server::{serve_listener, serve_stream};
use mcp_fidelity::mcp::{standard_registry, Dispatcher, JsonlLog, MemoryLog, ToolCallRecord, ToolData};
use serde_json::Value;

const PRICE_REQUEST: &str = r#"{"jsonrpc": "2.0", "method": "get_stock_price", "params": {"symbol": "AAPL"}, "id": 1, "context": {"session_id": "abc123"}}"#;

fn dispatcher() -> Dispatcher {
    Dispatcher::new(standard_registry(&ToolData::bundled()))
}

fn spawn_server() -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let d = Arc::new(dispatcher());
    thread::spawn(move || serve_listener(listener, d));
    addr
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        Self {
            reader: BufReader::new(s.try_clone().unwrap()),
            writer: s,
        }
    }

    fn call(&mut self, line: &str) -> String {
        self.writer.write_all(line.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
        let mut out = String::new();
        self.reader.read_line(&mut out).unwrap();
        out
    }
}

fn parse(line: &str) -> Value {
    serde_json::from_str(line).unwrap()
}

#[test]
fn price_request_over_tcp() {
    let addr = spawn_server();
    let mut c = Client::connect(addr);
    let first = c.call(PRICE_REQUEST);
    let v = parse(&first);
    assert_eq!(v["jsonrpc"], "2.0");
    assert_eq!(v["id"], 1);
    assert_eq!(v["uncertainty"], 0.01);
    assert_eq!(v["result"]["price"], 150.25);
    assert!(v["result"]["timestamp"].is_string());
    assert_eq!(c.call(PRICE_REQUEST), first);
}

#[test]
fn two_connections_are_independent() {
    let addr = spawn_server();
    let mut a = Client::connect(addr);
    let mut b = Client::connect(addr);
    let ra = a.call(r#"{"jsonrpc":"2.0","method":"knowledge_retrieval","params":{"query":"speed of light"},"id":"a"}"#);
    let rb = b.call(PRICE_REQUEST);
    assert_eq!(parse(&ra)["id"], "a");
    assert_eq!(parse(&ra)["result"].as_array().unwrap().len(), 3);
    assert_eq!(parse(&rb)["id"], 1);
    drop(a);
    assert_eq!(parse(&b.call(PRICE_REQUEST))["result"]["price"], 150.25);
}

#[test]
fn malformed_input_keeps_loop_alive() {
    let addr = spawn_server();
    let mut c = Client::connect(addr);
    let v = parse(&c.call("{not json"));
    assert_eq!(v["error"]["code"], -32700);
    assert_eq!(v["id"], Value::Null);
    assert_eq!(parse(&c.call(PRICE_REQUEST))["id"], 1);
}

#[test]
fn error_codes() {
    let d = dispatcher();
    let code = |line: &str| parse(&d.handle_line(line).unwrap())["error"]["code"].as_i64().unwrap();
    assert_eq!(code("[1, 2"), -32700);
    assert_eq!(
        code(r#"{"jsonrpc":"1.0","method":"get_trend","params":{},"id":1}"#),
        -32600
    );
    assert_eq!(code(r#"{"jsonrpc":"2.0","params":{},"id":1}"#), -32600);
    assert_eq!(
        code(r#"{"jsonrpc":"2.0","method":"launch","params":{},"id":1}"#),
        -32601
    );
    assert_eq!(
        code(r#"{"jsonrpc":"2.0","method":"get_stock_price","params":{},"id":1}"#),
        -32602
    );
    assert_eq!(
        code(r#"{"jsonrpc":"2.0","method":"get_stock_price","params":{"symbol":"ZZZZ"},"id":1}"#),
        -32602
    );
    assert_eq!(
        code(r#"{"jsonrpc":"2.0","method":"knowledge_retrieval","params":{"query":"x","top_k":0},"id":1}"#),
        -32602
    );
    assert_eq!(
        code(r#"{"jsonrpc":"2.0","method":"knowledge_retrieval","params":{"query":"x","colour":1},"id":1}"#),
        -32602
    );
}

#[test]
fn stream_loop_answers_in_order_and_skips_notifications() {
    let d = dispatcher();
    let input = format!(
        "{PRICE_REQUEST}\n\n{}\ngarbage\n{}\n",
        r#"{"jsonrpc":"2.0","method":"get_trend","params":{"symbol":"MSFT","days":7}}"#,
        r#"{"jsonrpc":"2.0","method":"get_trend","params":{"symbol":"MSFT","days":7},"id":2}"#
    );
    let mut out = Vec::new();
    serve_stream(&d, Cursor::new(input), &mut out).unwrap();
    let lines: Vec<Value> = String::from_utf8(out).unwrap().lines().map(parse).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["id"], 1);
    assert_eq!(lines[1]["error"]["code"], -32700);
    assert_eq!(lines[2]["id"], 2);
    assert_eq!(lines[2]["result"]["symbol"], "MSFT");
}

#[test]
fn calls_are_logged() {
    let log = Arc::new(MemoryLog::new());
    let d = dispatcher().with_sink(log.clone());
    d.handle_line(PRICE_REQUEST).unwrap();
    d.handle_line(r#"{"jsonrpc":"2.0","method":"get_stock_price","params":{"symbol":"ZZZZ"},"id":3}"#)
        .unwrap();
    let recs = log.records();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].tool, "get_stock_price");
    assert_eq!(recs[0].results["price"], 150.25);
    assert!(recs[1].results.get("error").is_some());
}

#[test]
fn jsonl_log_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("calls.jsonl");
    let d = dispatcher().with_sink(Arc::new(JsonlLog::create(&path).unwrap()));
    d.handle_line(PRICE_REQUEST).unwrap();
    d.handle_line(r#"{"jsonrpc":"2.0","method":"knowledge_retrieval","params":{"query":"ocean depth"},"id":9}"#)
        .unwrap();
    drop(d);
    let text = std::fs::read_to_string(&path).unwrap();
    let recs: Vec<ToolCallRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1].tool, "knowledge_retrieval");
    assert_eq!(recs[1].query, "ocean depth");
}
