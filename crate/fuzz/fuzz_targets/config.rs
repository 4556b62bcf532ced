#![no_main]

use libfuzzer_sys::fuzz_target;
use occlusym_cli::config::parse_override;
use occlusym_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    // first line: an optional override, rest: the config body
    let (head, body) = match data.iter().position(|&b| b == b'\n') {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (&data[..0], data),
    };
    let overrides: Vec<_> = std::str::from_utf8(head).ok().and_then(|s| parse_override(s).ok()).into_iter().collect();
    let _ = RunConfig::from_json(body, &overrides);
});
