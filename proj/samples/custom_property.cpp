// Defining a new robustness property and checking a model against it.
//
// The property brightens or darkens a square patch in the top-left corner of
// each image by up to epsilon, all pixels of the patch moving together. One
// generator describes that, so it needs the hybrid zonotope domain.
//
//   ./sample_custom_property [checkpoint-prefix]
//
// Without a checkpoint a ConvSmall-tiny baseline is trained for two epochs on
// the bundled MNIST subset first.

#include <iostream>

#include "zonotrain/zonotrain.hpp"

using namespace zonotrain;

class CornerPatch : public Property {
 public:
  CornerPatch(double epsilon, std::size_t size) : Property(epsilon), size_(size) {}

  std::string kind() const override { return "CornerPatch"; }
  std::vector<Domain> supported_domains() const override { return {Domain::HybridZonotope}; }

  PerturbationSet generate(const Shape& ex) const override {
    if (ex.size() != 3) throw DimensionError("CornerPatch expects [H, W, C] examples");
    const std::size_t H = ex[0], W = ex[1], C = ex[2];
    Tensor g(Shape{1, H, W, C}, 0.0);
    for (std::size_t i = 0; i < std::min(size_, H); ++i)
      for (std::size_t j = 0; j < std::min(size_, W); ++j)
        for (std::size_t c = 0; c < C; ++c) g[(i * W + j) * C + c] = epsilon_;
    return {Tensor(ex, 0.0), g};
  }

 private:
  std::size_t size_;
};

int main(int argc, char** argv) {
  const std::string dir = std::string(ZT_DATA_DIR) + "/mnist-subset/";
  const Dataset train_set = load_mnist_idx(dir + "train-images-idx3-ubyte", dir + "train-labels-idx1-ubyte");
  const Dataset test_set = load_mnist_idx(dir + "test-images-idx3-ubyte", dir + "test-labels-idx1-ubyte").head(200);

  Model model = build_architecture("ConvSmall-tiny", {28, 28, 1}, 10);
  Weights weights;
  if (argc > 1) {
    Checkpoint ck = load_checkpoint(argv[1]);
    model = Model::from_graph(std::move(ck.graph));
    weights = std::move(ck.weights);
  } else {
    weights = init_weights(model.graph, 1);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 10;
    tc.learning_rate = 1e-3;
    train(model, weights, train_set, tc);
  }

  // Registered properties can be named from run configs like the built-in ones.
  register_property("CornerPatch", [](const PropertyParams& p) {
    return std::make_unique<CornerPatch>(p.epsilon, p.n > 0 ? static_cast<std::size_t>(p.n) : 8);
  });

  TrainConfig eval;
  eval.property = "CornerPatch";
  eval.domain = Domain::HybridZonotope;
  eval.fourier_n = 8;  // patch side, passed through PropertyParams::n
  for (double eps : {0.05, 0.2, 0.5}) {
    eval.epsilon = eps;
    const Metrics m = evaluate(model, weights, test_set, eval);
    std::cout << "CornerPatch eps " << eps << ": test " << m.test_error << "%, attack " << m.pgd_error << "%, verify "
              << m.verify_error << "%\n";
  }
}
