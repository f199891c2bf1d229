//! Build a tiny flow graph by hand, solve it and print the cut and the dump.

use nuggetcut::{max_flow, FlowGraph};

fn main() -> nuggetcut::Result<()> {
    let mut g = FlowGraph::new(4);
    g.set_source_cap(0, 9.0);
    g.set_source_cap(1, 4.0);
    g.set_sink_cap(2, 6.0);
    g.set_sink_cap(3, 8.0);
    g.add_arc(0, 2, 5.0)?;
    g.add_arc(0, 3, 3.0)?;
    g.add_arc(1, 3, 7.0)?;
    g.add_arc(2, 3, 2.0)?;

    let cut = max_flow(&g);
    println!("max flow      {}", cut.flow_value);
    println!("cut capacity  {}", g.cut_capacity(&cut.source_side));
    println!("source side   {:?}", cut.source_side);
    println!("\n{}", g.dump_string());
    Ok(())
}
