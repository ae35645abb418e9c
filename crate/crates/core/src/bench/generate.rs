use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::ir::{parse, Program};
use crate::memmodel::Arch;

/// The two-thread kernels the padded family is built around.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Core {
    /// Store buffering: each thread stores one flag and reads the other.
    Sb,
    /// Message passing: data then flag, read back in the opposite order.
    Mp,
    /// Two store-buffering shapes in sequence; only the second one matters.
    Double,
    /// Peterson's lock guarding a shared counter.
    Peterson,
}

impl Core {
    pub const ALL: [Core; 4] = [Core::Sb, Core::Mp, Core::Double, Core::Peterson];

    pub fn name(self) -> &'static str {
        match self {
            Core::Sb => "sb",
            Core::Mp => "mp",
            Core::Double => "double",
            Core::Peterson => "peterson",
        }
    }

    /// Loop unwinding the core needs; only the lock has a loop.
    pub fn unwind(self) -> usize {
        match self {
            Core::Peterson => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Core {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Core {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sb" => Ok(Core::Sb),
            "mp" => Ok(Core::Mp),
            "double" => Ok(Core::Double),
            "peterson" => Ok(Core::Peterson),
            other => Err(format!(
                "unknown core `{other}` (expected sb, mp, double or peterson)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamSpec {
    pub core: Core,
    /// Padding blocks prepended to each thread.
    pub n: usize,
    pub arch: Arch,
}

impl ParamSpec {
    pub fn id(&self) -> String {
        format!("{}-n{}", self.core, self.n)
    }
}

struct Kernel {
    shared: &'static [&'static str],
    t1: &'static [&'static str],
    t2: &'static [&'static str],
    assertion: &'static str,
}

fn kernel(core: Core) -> Kernel {
    match core {
        Core::Sb => Kernel {
            shared: &["x", "y"],
            t1: &["store x = 1;", "load r1 = y;"],
            t2: &["store y = 1;", "load r2 = x;"],
            assertion: "t1.r1 == 1 || t2.r2 == 1",
        },
        Core::Mp => Kernel {
            shared: &["x", "y"],
            t1: &["store x = 1;", "store y = 1;"],
            t2: &["load r1 = y;", "load r2 = x;"],
            assertion: "t2.r1 != 1 || t2.r2 == 1",
        },
        Core::Double => Kernel {
            shared: &["z", "w", "x", "y"],
            t1: &[
                "store z = 1;",
                "load p1 = w;",
                "store x = 1;",
                "load r1 = y;",
            ],
            t2: &[
                "store w = 1;",
                "load p2 = z;",
                "store y = 1;",
                "load r2 = x;",
            ],
            assertion: "(t1.r1 == 1 || t2.r2 == 1) && t1.p1 + t2.p2 >= 0",
        },
        Core::Peterson => Kernel {
            shared: &["flag0", "flag1", "turn", "counter"],
            t1: &[
                "store flag0 = 1;",
                "store turn = 1;",
                "load f = flag1;",
                "load tu = turn;",
                "while (f == 1 && tu == 1) {",
                "  load f = flag1;",
                "  load tu = turn;",
                "}",
                "load c = counter;",
                "store counter = c + 1;",
                "store flag0 = 0;",
            ],
            t2: &[
                "store flag1 = 1;",
                "store turn = 0;",
                "load f = flag0;",
                "load tu = turn;",
                "while (f == 1 && tu == 0) {",
                "  load f = flag0;",
                "  load tu = turn;",
                "}",
                "load c = counter;",
                "store counter = c + 1;",
                "store flag1 = 0;",
            ],
            assertion: "counter == 2",
        },
    }
}

/// DSL text of `core` with `n` padding blocks at the head of each thread.
///
/// Padding block `i` of the first thread is
/// `store x_i = 1; load t = y_i; load u = s1acc; store s1acc = u + t;`
/// and the second thread mirrors it over `y_i`, `x_i` and `s2acc`. The
/// accumulators only ever grow, so `s1acc + s2acc >= 0` holds under every
/// reordering and the padding adds eligible pairs without adding culprits.
pub fn generate(core: Core, n: usize) -> String {
    let k = kernel(core);
    let mut out = String::new();
    for i in 0..n {
        writeln!(out, "shared x_{i} = 0;\nshared y_{i} = 0;").unwrap();
    }
    if n > 0 {
        out.push_str("shared s1acc = 0;\nshared s2acc = 0;\n");
    }
    for v in k.shared {
        writeln!(out, "shared {v} = 0;").unwrap();
    }
    for (name, body, mine, theirs, acc) in [
        ("t1", k.t1, "x", "y", "s1acc"),
        ("t2", k.t2, "y", "x", "s2acc"),
    ] {
        writeln!(out, "\nthread {name} {{").unwrap();
        for i in 0..n {
            writeln!(out, "  store {mine}_{i} = 1;\n  load t = {theirs}_{i};\n  load u = {acc};\n  store {acc} = u + t;")
                .unwrap();
        }
        for line in body {
            writeln!(out, "  {line}").unwrap();
        }
        out.push_str("}\n");
    }
    if n > 0 {
        writeln!(
            out,
            "\nfinal {{ assert(({}) && s1acc + s2acc >= 0); }}",
            k.assertion
        )
        .unwrap();
    } else {
        writeln!(out, "\nfinal {{ assert({}); }}", k.assertion).unwrap();
    }
    out
}

pub fn generate_program(core: Core, n: usize) -> Program {
    parse(&generate(core, n)).expect("generated programs parse")
}
