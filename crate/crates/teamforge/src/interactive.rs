//! Terminal front end for a single elicitation session.

use std::io::{BufRead, Write};

use teamforge_core::bandit::{Arm, BanditParams, BanditState, Choice};

use crate::cli::CliError;

fn parse_answer(line: &str, slate_len: usize) -> Option<Choice> {
    let line = line.trim();
    if line.eq_ignore_ascii_case("s") {
        return Some(Choice::Skip);
    }
    match line.parse::<usize>() {
        Ok(n) if (1..=slate_len).contains(&n) => Some(Choice::Arm(n - 1)),
        _ => None,
    }
}

/// Presents slates on `output` and reads answers from `input` until the
/// bandit stops. Answers are `1..=m` or `s` to skip the round.
pub fn run<R: BufRead, W: Write>(
    arms: Vec<Arm>,
    params: BanditParams,
    mut input: R,
    mut output: W,
) -> Result<BanditState, CliError> {
    let mut state = BanditState::new(arms, params)?;
    let mut line = String::new();
    while !state.is_terminal() {
        let slate = state.next_presentation()?;
        writeln!(
            output,
            "\nround {} (pick 1-{}, or s to skip)",
            state.rounds() + 1,
            slate.len()
        )?;
        for (pos, &arm) in slate.iter().enumerate() {
            let ev = &state.arms()[arm].evaluated_team;
            let [d, c, v] = ev.objectives.as_array();
            writeln!(
                output,
                "  {}) {}  diversity {d:.3}  cohesion {c:.3}  coverage {v:.3}",
                pos + 1,
                ev.team
            )?;
        }
        let choice = loop {
            write!(output, "> ")?;
            output.flush()?;
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(CliError::Usage(
                    "input ended before a recommendation was reached".into(),
                ));
            }
            match parse_answer(&line, slate.len()) {
                Some(Choice::Arm(pos)) => break Choice::Arm(slate[pos]),
                Some(Choice::Skip) => break Choice::Skip,
                None => writeln!(output, "enter a number from 1 to {} or s", slate.len())?,
            }
        };
        state.record_choice(&slate, choice)?;
    }
    let best = state.recommend()?;
    let [d, c, v] = best.objectives.as_array();
    writeln!(
        output,
        "\nrecommended team: {}\n  diversity {d:.3}  cohesion {c:.3}  coverage {v:.3}\n  after {} rounds",
        best.team,
        state.rounds()
    )?;
    Ok(state)
}
