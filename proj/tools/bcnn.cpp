// bcnn: command-line front end for the transform, layer audits, benchmarks
// and training runs.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bcnn/audit.hpp"
#include "bcnn/basis_io.hpp"
#include "bcnn/bench.hpp"
#include "bcnn/certify.hpp"
#include "bcnn/data/dataset.hpp"
#include "bcnn/data/pgm.hpp"
#include "bcnn/fb_image.hpp"
#include "bcnn/nn/train.hpp"
#include "bcnn/report.hpp"

#ifndef BCNN_DATA_DIR
#define BCNN_DATA_DIR "data/mnist5k"
#endif

namespace fs = std::filesystem;
using namespace bcnn;
using nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string precision = "double";
};

fs::path out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw validation_error("cannot write " + p.string());
    f << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string default_data_dir() {
    if (const char* env = std::getenv("BCNN_DATA")) return env;
    return BCNN_DATA_DIR;
}

data::LabeledDataset load_source(const std::string& dir) {
    const fs::path d(dir);
    return data::load_idx((d / "images-idx3-ubyte.gz").string(), (d / "labels-idx1-ubyte.gz").string());
}

/// Square odd canvas for a transform demo.
Image fit_to_filter(const Image& img, int filter_size) {
    if (img.height == filter_size && img.width == filter_size) return img;
    return pad_or_crop_center(img, filter_size);
}

json header(const Globals& g, std::vector<std::string> hashes = {}) {
    ReproHeader h{g.seed, parse_precision(g.precision), std::move(hashes)};
    return h.to_json();
}

// ---- decompose / reconstruct / rotate / reflect -----------------------------

struct TransformOpts {
    std::string image;
    int filter_size = 29;
    std::string cutoff = "full";
    double angle = 90.0;
    std::string coeffs;
    std::string output;
};

int run_decompose(const Globals& g, const TransformOpts& o) {
    const BasisSpec spec = make_basis(o.filter_size, parse_cutoff(o.cutoff));
    const FourierBessel fb(spec);
    const Image patch = fit_to_filter(data::read_pgm(o.image), o.filter_size);
    const FBCoefficients phi = fb.decompose(patch);
    const Image recon = fb.reconstruct(phi);
    const double rel = relative_l2_on_disk(patch, recon);
    json j = {{"header", header(g, {basis_hash(spec)})},
              {"basis", basis_to_json(spec)},
              {"coefficients", coeffs_to_json(phi)},
              {"relative_l2", rel}};
    write_json(out_path(g, "coefficients.json"), j);
    data::write_pgm(recon, out_path(g, "reconstruction.pgm").string());
    std::cout << "modes " << spec.size() << "\nrelative_l2 " << rel << "\n";
    return 0;
}

int run_reconstruct(const Globals& g, const TransformOpts& o) {
    std::ifstream f(o.coeffs);
    if (!f) throw validation_error("cannot open " + o.coeffs);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw validation_error(std::string("malformed coefficient file: ") + e.what());
    }
    const BasisSpec spec = j.contains("basis") ? basis_from_json(j.at("basis"))
                                               : make_basis(o.filter_size, parse_cutoff(o.cutoff));
    const FourierBessel fb(spec);
    const FBCoefficients phi = coeffs_from_json(j.contains("coefficients") ? j.at("coefficients") : j, spec);
    double residue = 0.0;
    const Image img = fb.reconstruct(phi, &residue);
    const std::string out = o.output.empty() ? out_path(g, "reconstruction.pgm").string() : o.output;
    data::write_pgm(img, out);
    std::cout << "wrote " << out << "\nimaginary_residue " << residue << "\n";
    return 0;
}

int run_rotate(const Globals& g, const TransformOpts& o, bool reflect) {
    const BasisSpec spec = make_basis(o.filter_size, parse_cutoff(o.cutoff));
    const FourierBessel fb(spec);
    const Image patch = fit_to_filter(data::read_pgm(o.image), o.filter_size);
    const FBCoefficients phi = fb.decompose(patch);
    const double alpha = o.angle * std::numbers::pi / 180.0;
    const FBCoefficients moved = reflect ? reflect_coeffs(phi) : rotate_coeffs(phi, alpha);
    const Image via_coeffs = fb.reconstruct(moved);
    const Image via_pixels = fb.reconstruct(fb.decompose(reflect ? mirror_vertical(patch) : data::rotate_image(patch, alpha)));
    const double rel = relative_l2_on_disk(via_pixels, via_coeffs);
    const std::string name = reflect ? "reflected.pgm" : "rotated.pgm";
    data::write_pgm(via_coeffs, out_path(g, name).string());
    json j = {{"header", header(g, {basis_hash(spec)})},
              {"operation", reflect ? "reflect" : "rotate"},
              {"coefficients", coeffs_to_json(moved)},
              {"relative_l2_vs_pixel_path", rel}};
    if (!reflect) j["angle_deg"] = o.angle;
    write_json(out_path(g, reflect ? "reflected.json" : "rotated.json"), j);
    std::cout << "relative_l2_vs_pixel_path " << rel << "\n";
    return 0;
}

// ---- audit / certify / bench ------------------------------------------------

struct AuditOpts {
    std::string group = "so2";
    std::string cutoff = "full";
    std::vector<int> filter_sizes{5, 9, 13};
    std::vector<double> angles{15, 30, 45, 90};
    int images = 32;
    int seeds = 1;
    int channels = 4;
    std::string data_dir;
};

int run_audit(const Globals& g, const AuditOpts& o) {
    const data::LabeledDataset ds = load_source(o.data_dir.empty() ? default_data_dir() : o.data_dir);
    const data::LabeledDataset pick = data::stratified_subsample(ds, std::max(o.images, ds.class_count), g.seed);
    std::vector<Image> imgs;
    for (int i = 0; i < o.images; ++i) imgs.push_back(pick.image(i));
    AuditConfig cfg;
    cfg.group = parse_group(o.group);
    cfg.cutoff = parse_cutoff(o.cutoff);
    cfg.filter_sizes = o.filter_sizes;
    cfg.angles_deg = o.angles;
    cfg.channels = o.channels;
    cfg.seeds.clear();
    for (int s = 0; s < o.seeds; ++s) cfg.seeds.push_back(g.seed + static_cast<std::uint64_t>(s));
    const AuditReport rep = audit_equivariance(cfg, imgs);
    json j = audit_to_json(rep);
    j["header"] = header(g, rep.basis_hashes);
    write_json(out_path(g, "audit.json"), j);
    std::cout << j.dump(2) << "\n";
    return rep.exact_ok ? 0 : 2;
}

int run_certify(const Globals& g, int cases) {
    const CertifyResult r = certify(g.seed, cases);
    const InjectivityReport inj = injectivity_probe(g.seed);
    json j = certify_to_json(r);
    j["injectivity"] = injectivity_to_json(inj);
    j["header"] = header(g);
    const bool ok = r.passed() && inj.collisions == 0;
    j["passed"] = ok;
    write_json(out_path(g, "certify.json"), j);
    std::cout << j.dump(2) << "\n";
    return ok ? 0 : 2;
}

struct BenchOpts {
    std::vector<int> filter_sizes{5, 9, 13, 17};
    int spatial = 32;
    int c_in = 8;
    int c_out = 8;
    int batch = 1;
    int repeats = 7;
    std::string group = "so2";
    std::string cutoff = "full";
};

int run_bench(const Globals& g, const BenchOpts& o) {
    BenchConfig cfg;
    cfg.filter_sizes = o.filter_sizes;
    cfg.spatial = o.spatial;
    cfg.c_in = o.c_in;
    cfg.c_out = o.c_out;
    cfg.batch = o.batch;
    cfg.repeats = o.repeats;
    cfg.group = parse_group(o.group);
    cfg.cutoff = parse_cutoff(o.cutoff);
    cfg.seed = g.seed;
    const BenchResult r = bench_forward(cfg);
    ReproHeader h{g.seed, Precision::double_, {}};
    for (int s : o.filter_sizes) h.basis_hashes.push_back(basis_hash(make_basis(s, cfg.cutoff)));
    std::string csv = h.csv_comment() + "# exponent: " + std::to_string(r.exponent) + "\n" + bench_csv(r);
    write_text(out_path(g, "bench.csv"), csv);
    std::cout << csv;
    return 0;
}

// ---- data, training, evaluation ----------------------------------------------

struct DataOpts {
    std::string dataset = "mnist-rot";
    std::string regime = "low";
    int test_count = 2000;
    bool rotate_test = false;
    std::string data_dir;
};

data::Split make_data(const Globals& g, const DataOpts& o) {
    const std::string dir = o.data_dir.empty() ? default_data_dir() : o.data_dir;
    return data::make_split(load_source(dir), o.dataset, data::parse_regime(o.regime), o.test_count, g.seed,
                            o.rotate_test, dir);
}

int run_gen_data(const Globals& g, const DataOpts& o, int previews) {
    const data::Split s = make_data(g, o);
    io::write_file(out_path(g, "train-images-idx3-ubyte").string(), data::encode_idx_images(s.train.images));
    io::write_file(out_path(g, "train-labels-idx1-ubyte").string(), data::encode_idx_labels(s.train.labels));
    io::write_file(out_path(g, "test-images-idx3-ubyte").string(), data::encode_idx_images(s.test.images));
    io::write_file(out_path(g, "test-labels-idx1-ubyte").string(), data::encode_idx_labels(s.test.labels));
    for (int i = 0; i < std::min(previews, s.train.size()); ++i) {
        data::write_pgm(s.train.image(i), out_path(g, "preview_" + std::to_string(i) + ".pgm").string());
    }
    json m = s.manifest;
    m["header"] = header(g);
    write_json(out_path(g, "manifest.json"), m);
    std::cout << m.dump(2) << "\n";
    return 0;
}

struct TrainOpts {
    DataOpts data;
    std::string method = "bcnn";
    std::string group = "so2";
    std::string cutoff = "half";
    std::string aug = "none";
    std::optional<double> lambda;
    bool multiscale = false;
    bool standardize = false;
    std::optional<int> epochs;
    std::optional<int> warmup_epochs;
    int batch_size = 64;
    double lr = 1e-3;
    double weight_decay = 0.0;
    int eval_every = 10;
    bool svg = false;
};

std::vector<std::string> model_hashes(nn::Model& m) {
    std::vector<std::string> out;
    for (const auto& layer : m.layers()) {
        if (const auto* b = std::get_if<nn::BConvBlock>(&layer)) {
            const std::string h = basis_hash(b->layer.spec());
            if (std::find(out.begin(), out.end(), h) == out.end()) out.push_back(h);
        }
    }
    return out;
}

int run_train(const Globals& g, const TrainOpts& o) {
    const data::Split split = make_data(g, o.data);
    nn::Model model(nn::make_model_config(o.data.dataset, nn::parse_method(o.method), o.lambda, parse_group(o.group),
                                          parse_cutoff(o.cutoff), o.multiscale, g.seed, o.standardize));
    nn::TrainConfig tc = nn::train_config_for(data::parse_regime(o.data.regime));
    if (o.epochs) tc.epochs = *o.epochs;
    if (o.warmup_epochs) tc.warmup_epochs = *o.warmup_epochs;
    tc.batch_size = o.batch_size;
    tc.peak_lr = o.lr;
    tc.weight_decay = o.weight_decay;
    tc.seed = g.seed;
    tc.augmentation = data::parse_augment(o.aug);
    tc.precision = parse_precision(g.precision);
    tc.eval_every = o.eval_every;

    std::cerr << "parameters " << model.parameter_count() << " lambda " << model.config().lambda << "\n";
    const nn::History h = nn::train(model, split.train, &split.test, tc, [](const nn::HistoryRow& r) {
        std::cerr << "epoch " << r.epoch << " " << r.split << " loss " << r.loss << " acc " << r.accuracy << " lr "
                  << r.lr << "\n";
    });
    ReproHeader rh{g.seed, tc.precision, model_hashes(model)};
    auto lines = rh.lines();
    lines.push_back({"dataset", o.data.dataset + (split.manifest.at("regenerated").get<bool>() ? " (regenerated)" : "")});
    write_text(out_path(g, "history.csv"), nn::history_csv(h, lines));
    nn::save_checkpoint(model, out_path(g, "model.bckp").string());
    json summary = {{"header", rh.to_json()},
                    {"model", nn::config_to_json(model.config())},
                    {"parameters", model.parameter_count()},
                    {"data", split.manifest},
                    {"train_accuracy", h.last("train")->accuracy},
                    {"test_accuracy", h.last("test")->accuracy}};
    write_json(out_path(g, "summary.json"), summary);
    if (o.svg) {
        Series tr{"train", {}, {}};
        Series te{"test", {}, {}};
        for (const auto& r : h.rows) {
            Series& s = r.split == "train" ? tr : te;
            s.x.push_back(r.epoch);
            s.y.push_back(r.accuracy);
        }
        write_text(out_path(g, "history.svg"), svg_line_chart({tr, te}, "accuracy", "epoch", "accuracy"));
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int run_eval(const Globals& g, const std::string& checkpoint, const DataOpts& o) {
    nn::Model model = nn::load_checkpoint(checkpoint);
    DataOpts d = o;
    if (d.dataset.empty()) d.dataset = model.config().dataset;
    const data::Split split = make_data(g, d);
    const nn::EvalResult r = nn::evaluate(model, split.test, parse_precision(g.precision));
    json j = {{"header", header(g, model_hashes(model))},
              {"checkpoint", checkpoint},
              {"dataset", d.dataset},
              {"test_count", split.test.size()},
              {"accuracy", r.accuracy},
              {"loss", r.loss},
              {"per_class", r.per_class}};
    write_json(out_path(g, "eval.json"), j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

void add_data_options(CLI::App* sub, DataOpts& d) {
    sub->add_option("--dataset", d.dataset, "mnist | mnist-rot | mnist-back | mnist-rot-back");
    sub->add_option("--regime", d.regime, "high | inter | low");
    sub->add_option("--test-count", d.test_count, "test images held out before subsampling");
    sub->add_flag("--rotate-test", d.rotate_test, "rotate only the test images");
    sub->add_option("--data-dir", d.data_dir, "directory with images-idx3-ubyte.gz and labels-idx1-ubyte.gz");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bessel-basis rotation-equivariant convolutions"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<CLI::ConfigINI>());
    app.set_config("--config", "", "INI file with key=value defaults");
    Globals g;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--precision", g.precision, "double | single")
        ->check(CLI::IsMember({"double", "single"}))
        ->capture_default_str();

    TransformOpts tr;
    auto* decompose = app.add_subcommand("decompose", "Fourier-Bessel coefficients of a PGM image");
    auto* reconstruct = app.add_subcommand("reconstruct", "image from a coefficient JSON file");
    auto* rotate = app.add_subcommand("rotate", "rotate an image in coefficient space");
    auto* reflect = app.add_subcommand("reflect", "mirror an image in coefficient space");
    for (auto* sub : {decompose, rotate, reflect}) sub->add_option("--image", tr.image, "input PGM")->required();
    for (auto* sub : {decompose, reconstruct, rotate, reflect}) {
        sub->add_option("--filter-size", tr.filter_size, "odd grid size")->capture_default_str();
        sub->add_option("--cutoff", tr.cutoff, "full | half")->capture_default_str();
    }
    reconstruct->add_option("--coeffs", tr.coeffs, "coefficient JSON")->required();
    reconstruct->add_option("--output", tr.output, "output PGM");
    rotate->add_option("--angle", tr.angle, "degrees, counter-clockwise")->capture_default_str();

    AuditOpts au;
    auto* audit = app.add_subcommand("audit", "rotation/reflection invariance audit");
    audit->add_option("--group", au.group, "so2 | o2")->capture_default_str();
    audit->add_option("--cutoff", au.cutoff, "full | half")->capture_default_str();
    audit->add_option("--filter-sizes", au.filter_sizes, "comma-separated odd sizes")->delimiter(',');
    audit->add_option("--angles", au.angles, "comma-separated degrees")->delimiter(',');
    audit->add_option("--images", au.images, "number of digits")->capture_default_str();
    audit->add_option("--seeds", au.seeds, "number of layer seeds")->capture_default_str();
    audit->add_option("--channels", au.channels, "filters per seed")->capture_default_str();
    audit->add_option("--data-dir", au.data_dir, "MNIST directory");

    int cases = 100;
    auto* cert = app.add_subcommand("certify", "oracle equivalence and symmetry suite");
    cert->add_option("--cases", cases, "random instances")->capture_default_str();

    BenchOpts bo;
    auto* bench = app.add_subcommand("bench", "forward timing against filter size");
    bench->add_option("--filter-sizes", bo.filter_sizes, "comma-separated odd sizes")->delimiter(',');
    bench->add_option("--spatial", bo.spatial)->capture_default_str();
    bench->add_option("--c-in", bo.c_in)->capture_default_str();
    bench->add_option("--c-out", bo.c_out)->capture_default_str();
    bench->add_option("--batch", bo.batch)->capture_default_str();
    bench->add_option("--repeats", bo.repeats)->capture_default_str();
    bench->add_option("--group", bo.group)->capture_default_str();
    bench->add_option("--cutoff", bo.cutoff)->capture_default_str();

    TrainOpts to;
    auto* train = app.add_subcommand("train", "train a model and write history + checkpoint");
    add_data_options(train, to.data);
    train->add_option("--method", to.method, "bcnn | vanilla")->capture_default_str();
    train->add_option("--group", to.group, "so2 | o2")->capture_default_str();
    train->add_option("--cutoff", to.cutoff, "full | half")->capture_default_str();
    train->add_option("--aug", to.aug, "none | online-rotations | online-rotations-reflections")->capture_default_str();
    train->add_option("--lambda", to.lambda, "width multiplier (vanilla default: matched parameter count)");
    train->add_flag("--multiscale", to.multiscale, "scales s, s+2, s+4 on same-padded layers");
    train->add_flag("--standardize", to.standardize, "per-channel batch normalization after each conv");
    train->add_option("--epochs", to.epochs, "default 50, or 150 for the low regime");
    train->add_option("--warmup-epochs", to.warmup_epochs, "default 10, or 30 for the low regime");
    train->add_option("--batch-size", to.batch_size)->capture_default_str();
    train->add_option("--lr", to.lr, "peak learning rate")->capture_default_str();
    train->add_option("--weight-decay", to.weight_decay)->capture_default_str();
    train->add_option("--eval-every", to.eval_every, "test evaluation period in epochs")->capture_default_str();
    train->add_flag("--svg", to.svg, "also write an accuracy chart");

    std::string checkpoint;
    DataOpts eo;
    eo.dataset.clear();
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its test split");
    eval->add_option("--checkpoint", checkpoint)->required();
    add_data_options(eval, eo);

    DataOpts go;
    int previews = 8;
    auto* gen = app.add_subcommand("gen-data", "write the train/test split as IDX files");
    add_data_options(gen, go);
    gen->add_option("--previews", previews, "PGM previews of training images")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        parse_precision(g.precision);
        if (*decompose) return run_decompose(g, tr);
        if (*reconstruct) return run_reconstruct(g, tr);
        if (*rotate) return run_rotate(g, tr, false);
        if (*reflect) return run_rotate(g, tr, true);
        if (*audit) return run_audit(g, au);
        if (*cert) return run_certify(g, cases);
        if (*bench) return run_bench(g, bo);
        if (*train) return run_train(g, to);
        if (*eval) return run_eval(g, checkpoint, eo);
        if (*gen) return run_gen_data(g, go, previews);
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nonfinite_loss_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
