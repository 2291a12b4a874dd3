//! Builders shared by unit tests: a small fixed vocabulary, an episode with
//! every modality populated, and encodings at toy model sizes.

use crate::corpus::{
    trisect, Behavior, ClipEpisode, RawVisualRecord, TimeSpan, Utterance, VisualRef,
};
use crate::encode::{encode_episode, EncodedEpisode, EncoderConfig, SpeakerMode};
use crate::mbti::{MbtiType, PersonalityProfile};
use crate::model::ModelConfig;
use crate::text::vocab::Vocabulary;

pub fn span(a: f64, b: f64) -> TimeSpan {
    TimeSpan::new(a, b).unwrap()
}

pub fn tiny_vocab() -> Vocabulary {
    let corpus = vec![
        "person1 person2 person3 hello there again waves smiles nods frowns \
         quietly loudly esfp intj entp isfj before after zz yy xx ww"; 3
    ];
    Vocabulary::build(corpus, 300, 1).unwrap()
}

pub fn full_episode(id: &str) -> ClipEpisode {
    let mut profile = PersonalityProfile::new();
    profile.insert("Person1", MbtiType::parse("ESFP").unwrap());
    profile.insert("Person2", MbtiType::parse("INTJ").unwrap());
    ClipEpisode {
        id: id.into(),
        duration: 30.0,
        visual: VisualRef {
            key: id.into(),
            d_2d: 2,
            d_3d: 1,
        },
        utterances: vec![
            Utterance {
                speaker: "Person1".into(),
                text: "hello there quietly".into(),
                span: span(1.0, 2.0),
            },
            Utterance {
                speaker: "Person2".into(),
                text: "loudly again".into(),
                span: span(3.0, 4.0),
            },
            Utterance {
                speaker: "Person1".into(),
                text: "after there".into(),
                span: span(15.0, 17.0),
            },
        ],
        behaviors: vec![
            Behavior {
                subject: "Person1".into(),
                text: "person1 waves".into(),
                span: span(2.0, 3.0),
            },
            Behavior {
                subject: "Person2".into(),
                text: "person2 nods after".into(),
                span: span(14.0, 15.0),
            },
        ],
        profile,
        present_span: span(10.0, 12.0),
        options: vec![
            "person1 smiles quietly".into(),
            "person1 frowns".into(),
            "person1 nods loudly there".into(),
            "person1 waves".into(),
        ],
        gold: 0,
        target_person: "Person1".into(),
    }
}

pub fn full_record() -> RawVisualRecord {
    RawVisualRecord {
        features: (0..18).map(|i| (i as f32) * 0.25 - 2.0).collect(),
        d_raw: 3,
        timestamps: vec![0.0, 4.0, 8.0, 13.0, 18.0, 25.0],
    }
}

pub fn tiny_encoder_config(mode: SpeakerMode) -> EncoderConfig {
    EncoderConfig {
        l_d: 6,
        l_a: 6,
        l_b: 6,
        l_p: 4,
        speaker_mode: mode,
        alias_tags: false,
    }
}

pub fn tiny_model_config(vocab: &Vocabulary) -> ModelConfig {
    ModelConfig {
        d: 8,
        h: 2,
        d_raw: 3,
        n_vocab: vocab.size(),
        dropout: 0.0,
    }
}

pub fn encode_full(
    episode: &ClipEpisode,
    vocab: &Vocabulary,
    mode: SpeakerMode,
) -> EncodedEpisode {
    let rec = full_record();
    let tri = trisect(episode, &rec.timestamps);
    encode_episode(
        episode,
        &tri,
        vocab,
        Some(&rec),
        &tiny_encoder_config(mode),
        &episode.profile,
    )
    .unwrap()
}
