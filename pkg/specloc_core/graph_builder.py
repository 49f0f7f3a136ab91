from langgraph.graph import StateGraph, START, END

from specloc_core.graph_nodes import (
    RunState,
    build_config,
    build_problem,
    run_command,
    render_output,
    end_with_error,
    route_after_config,
    route_after_problem,
    route_after_command,
)


def build_graph() -> "CompiledGraph":
    """
    Creates and returns the compiled pipeline graph

    config -> problem -> command -> output, with every stage able to
    divert to end_with_error.
    """
    builder = StateGraph(RunState)
    builder.add_node("build_config", build_config)
    builder.add_node("build_problem", build_problem)
    builder.add_node("run_command", run_command)
    builder.add_node("render_output", render_output)
    builder.add_node("end_with_error", end_with_error)

    builder.add_edge(START, "build_config")

    builder.add_conditional_edges(
        "build_config",
        route_after_config,
        {
            "build_problem": "build_problem",
            "end_with_error": "end_with_error",
        },
    )
    builder.add_conditional_edges(
        "build_problem",
        route_after_problem,
        {
            "run_command": "run_command",
            "end_with_error": "end_with_error",
        },
    )
    builder.add_conditional_edges(
        "run_command",
        route_after_command,
        {
            "render_output": "render_output",
            "end_with_error": "end_with_error",
        },
    )

    builder.add_edge("render_output", END)
    builder.add_edge("end_with_error", END)

    app = builder.compile()
    return app


# ready on import
app = build_graph()
