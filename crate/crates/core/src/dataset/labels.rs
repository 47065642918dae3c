use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The fourteen scene classes. The declaration order is the class index used
/// by the model head and the confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneLabel {
    CocktailParty,
    InterferingSpeakers,
    InTraffic,
    InVehicle,
    Music,
    QuietIndoors,
    ReverberantEnvironment,
    WindTurbulence,
    SpeechInTraffic,
    SpeechInVehicle,
    SpeechInMusic,
    SpeechInQuietIndoors,
    SpeechInReverberantEnv,
    SpeechInWindTurbulence,
}

impl SceneLabel {
    pub const COUNT: usize = 14;

    pub const ALL: [SceneLabel; Self::COUNT] = [
        SceneLabel::CocktailParty,
        SceneLabel::InterferingSpeakers,
        SceneLabel::InTraffic,
        SceneLabel::InVehicle,
        SceneLabel::Music,
        SceneLabel::QuietIndoors,
        SceneLabel::ReverberantEnvironment,
        SceneLabel::WindTurbulence,
        SceneLabel::SpeechInTraffic,
        SceneLabel::SpeechInVehicle,
        SceneLabel::SpeechInMusic,
        SceneLabel::SpeechInQuietIndoors,
        SceneLabel::SpeechInReverberantEnv,
        SceneLabel::SpeechInWindTurbulence,
    ];

    /// Environments that get a speech-mixed counterpart.
    pub const MIXABLE: [SceneLabel; 6] = [
        SceneLabel::InTraffic,
        SceneLabel::InVehicle,
        SceneLabel::Music,
        SceneLabel::QuietIndoors,
        SceneLabel::ReverberantEnvironment,
        SceneLabel::WindTurbulence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SceneLabel::CocktailParty => "cocktail_party",
            SceneLabel::InterferingSpeakers => "interfering_speakers",
            SceneLabel::InTraffic => "in_traffic",
            SceneLabel::InVehicle => "in_vehicle",
            SceneLabel::Music => "music",
            SceneLabel::QuietIndoors => "quiet_indoors",
            SceneLabel::ReverberantEnvironment => "reverberant_environment",
            SceneLabel::WindTurbulence => "wind_turbulence",
            SceneLabel::SpeechInTraffic => "speech_in_traffic",
            SceneLabel::SpeechInVehicle => "speech_in_vehicle",
            SceneLabel::SpeechInMusic => "speech_in_music",
            SceneLabel::SpeechInQuietIndoors => "speech_in_quiet_indoors",
            SceneLabel::SpeechInReverberantEnv => "speech_in_reverberant_env",
            SceneLabel::SpeechInWindTurbulence => "speech_in_wind_turbulence",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SceneLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn is_speech_mix(self) -> bool {
        self.speech_mix_source().is_some()
    }

    /// The speech-mixed label of an environment, if it has one.
    pub fn speech_mix(self) -> Option<SceneLabel> {
        Some(match self {
            SceneLabel::InTraffic => SceneLabel::SpeechInTraffic,
            SceneLabel::InVehicle => SceneLabel::SpeechInVehicle,
            SceneLabel::Music => SceneLabel::SpeechInMusic,
            SceneLabel::QuietIndoors => SceneLabel::SpeechInQuietIndoors,
            SceneLabel::ReverberantEnvironment => SceneLabel::SpeechInReverberantEnv,
            SceneLabel::WindTurbulence => SceneLabel::SpeechInWindTurbulence,
            _ => return None,
        })
    }

    /// The environment a speech-mixed label was built from.
    pub fn speech_mix_source(self) -> Option<SceneLabel> {
        Self::MIXABLE
            .into_iter()
            .find(|env| env.speech_mix() == Some(self))
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|l| l.as_str().to_string()).collect()
    }
}

impl fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::invalid("label", format!("unknown scene label `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_and_pairing() {
        for (i, l) in SceneLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.as_str().parse::<SceneLabel>().unwrap(), *l);
            let json = serde_json::to_string(l).unwrap();
            assert_eq!(json, format!("\"{}\"", l.as_str()));
            assert_eq!(l.is_speech_mix(), l.as_str().starts_with("speech_in_"));
        }
        let paired = SceneLabel::ALL.iter().filter(|l| l.speech_mix().is_some()).count();
        assert_eq!(paired, 6);
        assert!(SceneLabel::CocktailParty.speech_mix().is_none());
        assert!(SceneLabel::InterferingSpeakers.speech_mix().is_none());
        assert!("speech_in_space".parse::<SceneLabel>().is_err());
    }
}
