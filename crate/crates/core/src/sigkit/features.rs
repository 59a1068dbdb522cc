use super::{
    band_filter, bandpass_4_45, diff_entropy, downsample_128, notch_filter, welch_psd, BandFeatures, BandSpec,
    SigError, TimeSeries,
};

/// Five DE values followed by five band powers.
pub const FEATURES_PER_CHANNEL: usize = 10;

/// Notch at `line_hz`, 4–45 Hz bandpass, then decimation to 128 Hz.
pub fn preprocess(x: &TimeSeries, line_hz: f64) -> Result<TimeSeries, SigError> {
    let notched = notch_filter(x, line_hz)?;
    let banded = bandpass_4_45(&notched)?;
    downsample_128(&banded)
}

/// Band features of one preprocessed channel.
pub fn channel_features(x: &TimeSeries) -> Result<BandFeatures, SigError> {
    let mut de = [0.0; 5];
    for (slot, band) in de.iter_mut().zip(&BandSpec::CANONICAL) {
        let isolated = band_filter(x, band.lo_hz, band.hi_hz)?;
        *slot = diff_entropy(&isolated, 2.0)?.mean();
    }
    let powers = welch_psd(x, &BandSpec::CANONICAL)?;
    let mut psd = [0.0; 5];
    psd.copy_from_slice(&powers);
    Ok(BandFeatures { de, psd })
}

/// Concatenated `[DE_θ..DE_γ, PSD_θ..PSD_γ]` blocks, one per channel.
pub fn extract_modality_features(channels: &[TimeSeries]) -> Result<Vec<f64>, SigError> {
    let mut out = Vec::with_capacity(channels.len() * FEATURES_PER_CHANNEL);
    for ch in channels {
        out.extend(channel_features(ch)?.to_vec());
    }
    Ok(out)
}
