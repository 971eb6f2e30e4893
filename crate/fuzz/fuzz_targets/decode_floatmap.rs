#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = sphere_stereo::imageio::decode_floatmap(data);
});
