#pragma once

// Umbrella header.
#include "ligram/ablation.hpp"
#include "ligram/autodiff.hpp"
#include "ligram/corpus.hpp"
#include "ligram/embeddings.hpp"
#include "ligram/gradcheck.hpp"
#include "ligram/graph.hpp"
#include "ligram/metrics.hpp"
#include "ligram/model.hpp"
#include "ligram/pipeline.hpp"
#include "ligram/semcon.hpp"
#include "ligram/sparse.hpp"
#include "ligram/synthetic.hpp"
#include "ligram/trainer.hpp"
