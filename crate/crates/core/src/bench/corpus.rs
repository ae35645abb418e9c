use super::generate::{generate, Core};
use crate::ir::{parse, unroll, Program, UnrolledProgram};

/// A bundled litmus-style program.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    pub unwind: usize,
}

impl CorpusEntry {
    pub fn program(&self) -> Program {
        parse(&self.source).expect("corpus programs parse")
    }

    pub fn unrolled(&self) -> UnrolledProgram {
        unroll(&self.program(), self.unwind)
    }
}

const SB_FENCED: &str = "\
shared x = 0;
shared y = 0;

thread t1 {
  store x = 1;
  fence;
  load r1 = y;
}

thread t2 {
  store y = 1;
  fence;
  load r2 = x;
}

final { assert(t1.r1 == 1 || t2.r2 == 1); }
";

// Reads never overtake writes, so this is safe everywhere we model.
const LB: &str = "\
shared x = 0;
shared y = 0;

thread t1 {
  load r1 = y;
  store x = 1;
}

thread t2 {
  load r2 = x;
  store y = 1;
}

final { assert(!(t1.r1 == 1 && t2.r2 == 1)); }
";

const DEKKER: &str = "\
shared flag0 = 0;
shared flag1 = 0;
shared cs = 0;

thread t1 {
  store flag0 = 1;
  load f = flag1;
  if (f == 0) {
    load c = cs;
    store cs = c + 1;
  }
}

thread t2 {
  store flag1 = 1;
  load f = flag0;
  if (f == 0) {
    load c = cs;
    store cs = c + 1;
  }
}

final { assert(cs <= 1); }
";

const RING3: &str = "\
shared x = 0;
shared y = 0;
shared z = 0;

thread t1 {
  store x = 1;
  load r = y;
}

thread t2 {
  store y = 1;
  load r = z;
}

thread t3 {
  store z = 1;
  load r = x;
}

final { assert(t1.r == 1 || t2.r == 1 || t3.r == 1); }
";

// The consumer spins on the flag, then checks the payload in-thread.
const MP_SPIN: &str = "\
shared data = 0;
shared flag = 0;

thread producer {
  store data = 1;
  store flag = 1;
}

thread consumer {
  load f = flag;
  while (f == 0) {
    load f = flag;
  }
  load d = data;
  assert(d == 1);
}
";

const SEQ_BUG: &str = "\
shared x = 0;

thread t1 {
  store x = 1;
  load a = x;
  assert(a == 2);
}
";

/// Every bundled program, in a fixed order.
pub fn corpus() -> Vec<CorpusEntry> {
    let mut out: Vec<CorpusEntry> = Core::ALL
        .iter()
        .map(|&c| CorpusEntry {
            name: c.name().to_string(),
            source: generate(c, 0),
            unwind: c.unwind(),
        })
        .collect();
    for (name, source, unwind) in [
        ("sb-fenced", SB_FENCED, 1),
        ("lb", LB, 1),
        ("dekker", DEKKER, 1),
        ("ring3", RING3, 1),
        ("mp-spin", MP_SPIN, 2),
        ("seq-bug", SEQ_BUG, 1),
    ] {
        out.push(CorpusEntry {
            name: name.to_string(),
            source: source.to_string(),
            unwind,
        });
    }
    out.push(CorpusEntry {
        name: "sb-n1".to_string(),
        source: generate(Core::Sb, 1),
        unwind: 1,
    });
    out
}
