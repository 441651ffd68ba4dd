//! Newline-delimited JSON-RPC over a byte stream or TCP.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use super::dispatch::Dispatcher;

/// Serves one stream until end of input. Responses are written in request
/// order and flushed per line; blank lines are ignored.
pub fn serve_stream<R: BufRead, W: Write>(dispatcher: &Dispatcher, reader: R, mut writer: W) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(out) = dispatcher.handle_line(&line) {
            writer.write_all(out.as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
    }
    Ok(())
}

pub fn serve_stdio(dispatcher: &Dispatcher) -> io::Result<()> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve_stream(dispatcher, stdin.lock(), BufWriter::new(stdout.lock()))
}

fn handle_connection(dispatcher: &Dispatcher, stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_stream(dispatcher, reader, BufWriter::new(stream))
}

/// Accepts connections forever, one thread per connection.
pub fn serve_listener(listener: TcpListener, dispatcher: Arc<Dispatcher>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        let d = dispatcher.clone();
        thread::spawn(move || {
            log::info!("connection from {peer}");
            if let Err(e) = handle_connection(&d, stream) {
                log::warn!("connection {peer} ended with error: {e}");
            }
        });
    }
    Ok(())
}

pub fn serve_tcp(addr: impl ToSocketAddrs, dispatcher: Arc<Dispatcher>) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_listener(listener, dispatcher)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcp::{standard_registry, ToolData};
    use serde_json::Value;

    #[test]
    fn stream_survives_malformed_lines() {
        let d = Dispatcher::new(standard_registry(&ToolData::bundled()));
        let input = concat!(
            "{bad json\n",
            "\n",
            r#"{"jsonrpc":"2.0","method":"get_stock_price","params":{"symbol":"AAPL"},"id":7}"#,
            "\n"
        );
        let mut out = Vec::new();
        serve_stream(&d, input.as_bytes(), &mut out).unwrap();
        let lines: Vec<Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["error"]["code"], -32700);
        assert_eq!(lines[1]["id"], 7);
        assert_eq!(lines[1]["result"]["price"], 150.25);
    }
}
