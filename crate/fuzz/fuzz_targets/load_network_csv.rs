#![no_main]
use libfuzzer_sys::fuzz_target;

// Input is the nodes file and the edges file separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (nodes, edges) = (&data[..split], data.get(split + 1..).unwrap_or_default());
    if let Ok(net) = pinsim::netsim::load_network(nodes, edges) {
        let _ = pinsim::netsim::all_impacts(&net);
    }
});
