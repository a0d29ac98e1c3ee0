//! Reading and writing multichannel WAV files in PCM-16 and float-32,
//! including clipping and the error reported for a missing file.
//!
//! `cargo run --example wav_io`

use gsmnmf::audio_io::{read_wav, write_wav, AudioBuffer, Encoding};
use ndarray::array;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("gsmnmf_wav_io_example");
    std::fs::create_dir_all(&dir)?;
    let buf = AudioBuffer::new(array![[0.0, 0.25, -0.5, 1.5], [0.1, -0.1, 0.9, -1.2]], 16_000)?;
    for (name, enc) in [("pcm16.wav", Encoding::Pcm16), ("float32.wav", Encoding::Float32)] {
        let path = dir.join(name);
        write_wav(&path, &buf, enc)?;
        let back = read_wav(&path)?;
        println!("{name}: {} ch, {} frames @ {} Hz", back.channels(), back.frames(), back.sample_rate());
        for c in 0..back.channels() {
            println!("  ch{c}: {:?}", back.channel(c));
        }
    }
    match read_wav(dir.join("missing.wav")) {
        Ok(_) => unreachable!(),
        Err(e) => println!("missing file: {e}"),
    }
    Ok(())
}
