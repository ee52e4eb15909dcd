import json

import streamlit as st

from core.active_loop import ExperimentConfig, Strategy, run_experiment
from utils.config import BENCH_KINDS, ExperimentSetup, configure_logging
from utils.errors import SdmError
from utils.formatter import (
    format_bins,
    format_epoch_metrics,
    format_per_class_accuracy,
    format_selections,
    format_summary,
    sanitize_filename,
)

# Page configuration
st.set_page_config(
    page_title="Active Domain Adaptation Lab",
    page_icon="🎯",
    layout="wide",
    initial_sidebar_state="expanded"
)


def initialize_session_state():
    """Initialize session state variables"""
    if 'history' not in st.session_state:
        st.session_state.history = None
    if 'run_label' not in st.session_state:
        st.session_state.run_label = ""


def sidebar_config():
    """Collect experiment settings from the sidebar"""
    with st.sidebar:
        st.header("Experiment")
        bench_kind = st.selectbox("Bench", BENCH_KINDS)
        strategy = st.selectbox("Selection strategy", [s.value for s in Strategy])
        use_fda = st.checkbox("Spectral transfer on source", value=bench_kind == "texture",
                              disabled=bench_kind != "texture")
        seed = st.number_input("Seed", min_value=0, value=0, step=1)

        st.markdown("---")
        st.markdown("### Schedule")
        rounds = st.number_input("Rounds", min_value=0, max_value=10, value=5, step=1)
        first_epoch = st.number_input("First selection epoch", min_value=2, value=10, step=1)
        spacing = st.number_input("Epochs between rounds", min_value=1, value=2, step=1)
        total_epochs = st.number_input("Total epochs", min_value=2, value=50, step=1)
        fraction = st.slider("Fraction of the target pool per round", 0.0, 0.2, 0.02, 0.005)

        st.markdown("---")
        st.markdown("### Hyperparameters")
        lam = st.number_input("Lambda", min_value=0.0, value=0.001, format="%.4f")
        beta = st.number_input("Beta", min_value=0.001, max_value=0.5, value=0.033, format="%.3f")
        samples_per_class = st.number_input("Samples per class", min_value=10, value=100, step=10)

    values = {
        "rounds": int(rounds),
        "selection_epochs": [int(first_epoch + r * spacing) for r in range(int(rounds))],
        "total_epochs": int(total_epochs),
        "per_round_fraction": float(fraction),
        "strategy": strategy,
        "use_fda": bool(use_fda and bench_kind == "texture"),
        "lambda": float(lam),
        "beta": float(beta),
        "seed": int(seed),
    }
    bench_spec = {"samples_per_class": int(samples_per_class), "seed": int(seed)}
    return values, bench_kind, bench_spec


def run_from_sidebar(values, bench_kind, bench_spec):
    """Run one experiment and keep its history in the session"""
    try:
        setup = ExperimentSetup(config=ExperimentConfig.from_dict(values), bench_kind=bench_kind,
                                bench_spec=bench_spec)
        with st.spinner("Running experiment..."):
            st.session_state.history = run_experiment(setup.config, setup.build_data())
        st.session_state.run_label = sanitize_filename(
            f"{bench_kind}_{values['strategy']}_seed{values['seed']}{'_fda' if values['use_fda'] else ''}"
        )
    except SdmError as e:
        st.error(f"Experiment rejected: {e}")


def display_results(history, label):
    """Show the metrics tables of a finished run"""
    summary = format_summary(history)
    col1, col2, col3 = st.columns(3)
    col1.metric("Average per-class accuracy", f"{summary['average_accuracy']:.2f}%")
    col2.metric("ECE", f"{summary['ece']:.4f}")
    col3.metric("Labeled target samples", summary['labeled_target'])

    tables = {
        "epochs": format_epoch_metrics(history),
        "selections": format_selections(history),
        "reliability_bins": format_bins(history),
        "per_class_accuracy": format_per_class_accuracy(history),
    }
    tabs = st.tabs([name.replace("_", " ").title() for name in tables])
    for tab, (name, frame) in zip(tabs, tables.items()):
        with tab:
            st.dataframe(frame, use_container_width=True)
            st.download_button(
                label=f"📥 Download {name}.csv",
                data=frame.to_csv(index=False),
                file_name=f"{label}_{name}.csv",
                mime="text/csv",
                key=f"download_{name}",
            )

    st.download_button(
        label="📥 Export run summary (JSON)",
        data=json.dumps(summary, indent=2),
        file_name=f"{label}_summary.json",
        mime="application/json",
    )


def main():
    """Main application function"""
    configure_logging()
    initialize_session_state()

    st.title("🎯 Active Domain Adaptation Lab")
    st.markdown("Run spectral-transfer and margin-based selection experiments on synthetic two-domain benches.")

    values, bench_kind, bench_spec = sidebar_config()
    if st.button("▶️ Run experiment"):
        run_from_sidebar(values, bench_kind, bench_spec)

    if st.session_state.history is not None:
        display_results(st.session_state.history, st.session_state.run_label)
    else:
        st.info("Choose settings in the sidebar and run an experiment to see its metrics")


if __name__ == "__main__":
    main()
