mod common;

use metaqa_core::candidates::Condition;
use metaqa_play::session::Action;
use metaqa_play::{read_log, RewriteRequest, Session, StartRequest, Store, Submission, SubmitRequest, REVEAL_LIMIT};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Reveal,
    Rewrite,
    Select(usize),
    Abstain,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => Just(Op::Reveal),
        1 => Just(Op::Rewrite),
        2 => (0usize..30).prop_map(Op::Select),
        1 => Just(Op::Abstain),
    ]
}

fn condition() -> impl Strategy<Value = Condition> {
    prop_oneof![Just(Condition::AnswerOnly), Just(Condition::Context), Just(Condition::RewriteQues)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_script_keeps_the_protocol_and_replays(
        cond in condition(),
        seed in 0u64..1000,
        script in prop::collection::vec(op(), 0..120),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let service = common::persistent(dir.path());
        let req = StartRequest { user_id: "p".into(), condition: cond, seed, sample_size: Some(5), window: None, show_scores: false };
        let id = service.start_session(req).unwrap().session_id;
        for op in script {
            let _ = match op {
                Op::Reveal => service.reveal(&id).map(drop),
                Op::Rewrite => {
                    let req = RewriteRequest { text: "what is the q03 thing".into(), backend: "self".into(), same_page: false };
                    service.rewrite(&id, req).map(drop)
                }
                Op::Select(index) => {
                    let req = SubmitRequest { submission: Submission::Select { index }, question_id: None, idempotency_key: None };
                    service.submit(&id, req).map(drop)
                }
                Op::Abstain => {
                    let req = SubmitRequest { submission: Submission::Abstain, question_id: None, idempotency_key: None };
                    service.submit(&id, req).map(drop)
                }
            };
            if let Some(ep) = &service.snapshot(&id).unwrap().current {
                prop_assert!(ep.revealed <= REVEAL_LIMIT);
            }
        }

        let session = service.snapshot(&id).unwrap();
        prop_assert!(session.episodes.len() <= 5);
        for (ep, q) in session.episodes.iter().zip(&session.header.questions) {
            prop_assert_eq!(&ep.question_id, q);
            let mut revealed = 0;
            for a in &ep.actions {
                match a.action {
                    Action::Reveal { index } => {
                        prop_assert_eq!(index, revealed);
                        revealed += 1;
                    }
                    Action::Select { index } => prop_assert!(index < revealed),
                    Action::Rewrite { .. } => prop_assert_eq!(cond, Condition::RewriteQues),
                    Action::Abstain => {}
                }
            }
            prop_assert!(revealed <= REVEAL_LIMIT);
        }

        let events = read_log(&Store::open(dir.path()).unwrap().session_path(&id)).unwrap();
        prop_assert_eq!(Session::replay(&events, service.corpus()).unwrap(), session);
    }
}
