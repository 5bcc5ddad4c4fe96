"""Build the tiny ONNX models used by the neural-backend tests.

rec.onnx   recognizer: emits a fixed label text when the line is bright,
           only blanks when it is dark.
det.onnx   detector: text probability = sigmoid(4 * channel mean).
sam_encoder.onnx / sam_decoder.onnx
           prompt decoder: a disc of radius 20 px around the prompt, plus a
           second all-negative mask with lower predicted IoU.

Run from this directory: python3 make_models.py
"""

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

OPSET = [helper.make_opsetid("", 13)]
TEXT = "D B1 R8 P32 BESC-34"
CHARSET = sorted(set(TEXT) - {" "})


def const(name, arr):
    return helper.make_node("Constant", [], [name], value=numpy_helper.from_array(np.asarray(arr), name + "_v"))


def save(graph, path):
    model = helper.make_model(graph, opset_imports=OPSET, producer_name="fixtures")
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, path)


def recognizer():
    classes = len(CHARSET) + 2  # blank, charset, space
    steps = 2 * len(TEXT)
    text = np.zeros((1, steps, classes), np.float32)
    blank = np.zeros((1, steps, classes), np.float32)
    blank[0, :, 0] = 1.0
    for i, ch in enumerate(TEXT):
        cls = classes - 1 if ch == " " else CHARSET.index(ch) + 1
        text[0, 2 * i, cls] = 0.95
        text[0, 2 * i, 0] = 0.05
        text[0, 2 * i + 1, 0] = 1.0
    nodes = [
        helper.make_node("ReduceMean", ["x"], ["m"], keepdims=0),
        const("k", np.float32(20.0)),
        helper.make_node("Mul", ["m", "k"], ["km"]),
        helper.make_node("Sigmoid", ["km"], ["s"]),
        const("one", np.float32(1.0)),
        helper.make_node("Sub", ["one", "s"], ["ns"]),
        const("text", text),
        const("blank", blank),
        helper.make_node("Mul", ["text", "s"], ["a"]),
        helper.make_node("Mul", ["blank", "ns"], ["b"]),
        helper.make_node("Add", ["a", "b"], ["probs"]),
    ]
    graph = helper.make_graph(
        nodes,
        "rec",
        [helper.make_tensor_value_info("x", TensorProto.FLOAT, [1, 3, 48, "w"])],
        [helper.make_tensor_value_info("probs", TensorProto.FLOAT, [1, steps, classes])],
    )
    save(graph, "rec.onnx")
    with open("rec.txt", "w") as f:
        f.write("\n".join(CHARSET) + "\n")


def detector():
    nodes = [
        helper.make_node("ReduceMean", ["x"], ["m"], axes=[1], keepdims=1),
        const("k", np.float32(4.0)),
        helper.make_node("Mul", ["m", "k"], ["km"]),
        helper.make_node("Sigmoid", ["km"], ["map"]),
    ]
    graph = helper.make_graph(
        nodes,
        "det",
        [helper.make_tensor_value_info("x", TensorProto.FLOAT, [1, 3, "h", "w"])],
        [helper.make_tensor_value_info("map", TensorProto.FLOAT, [1, 1, "h", "w"])],
    )
    save(graph, "det.onnx")


def sam():
    enc = helper.make_graph(
        [helper.make_node("AveragePool", ["image"], ["embedding"], kernel_shape=[16, 16], strides=[16, 16])],
        "sam_encoder",
        [helper.make_tensor_value_info("image", TensorProto.FLOAT, [1, 3, 1024, 1024])],
        [helper.make_tensor_value_info("embedding", TensorProto.FLOAT, [1, 3, 64, 64])],
    )
    save(enc, "sam_encoder.onnx")

    nodes = [
        const("i0", np.int64(0)),
        const("i1", np.int64(1)),
        helper.make_node("Gather", ["orig_im_size", "i0"], ["h"], axis=0),
        helper.make_node("Gather", ["orig_im_size", "i1"], ["w"], axis=0),
        const("half", np.float32(0.5)),
        const("step", np.float32(1.0)),
        helper.make_node("Range", ["half", "h", "step"], ["ys"]),
        helper.make_node("Range", ["half", "w", "step"], ["xs"]),
        helper.make_node("Max", ["h", "w"], ["side"]),
        const("input_side", np.float32(1024.0)),
        helper.make_node("Div", ["side", "input_side"], ["unscale"]),
        const("pt_starts", np.array([0, 0, 0], np.int64)),
        const("pt_ends", np.array([1, 1, 2], np.int64)),
        helper.make_node("Slice", ["point_coords", "pt_starts", "pt_ends"], ["pt"]),
        const("flat", np.array([2], np.int64)),
        helper.make_node("Reshape", ["pt", "flat"], ["pt2"]),
        helper.make_node("Mul", ["pt2", "unscale"], ["p"]),
        helper.make_node("Gather", ["p", "i0"], ["px"], axis=0),
        helper.make_node("Gather", ["p", "i1"], ["py"], axis=0),
        helper.make_node("Sub", ["ys", "py"], ["dy"]),
        helper.make_node("Sub", ["xs", "px"], ["dx"]),
        helper.make_node("Mul", ["dy", "dy"], ["dy2"]),
        helper.make_node("Mul", ["dx", "dx"], ["dx2"]),
        const("col", np.array([-1, 1], np.int64)),
        const("row", np.array([1, -1], np.int64)),
        helper.make_node("Reshape", ["dy2", "col"], ["dy2c"]),
        helper.make_node("Reshape", ["dx2", "row"], ["dx2r"]),
        helper.make_node("Add", ["dy2c", "dx2r"], ["d2"]),
        const("r2", np.float32(400.0)),
        helper.make_node("Sub", ["r2", "d2"], ["disc"]),
        const("zero", np.float32(0.0)),
        const("minus", np.float32(-1.0)),
        helper.make_node("Mul", ["d2", "zero"], ["zeros"]),
        helper.make_node("Add", ["zeros", "minus"], ["neg"]),
        const("axes4", np.array([0, 1], np.int64)),
        helper.make_node("Unsqueeze", ["disc", "axes4"], ["disc4"]),
        helper.make_node("Unsqueeze", ["neg", "axes4"], ["neg4"]),
        helper.make_node("Concat", ["disc4", "neg4"], ["masks"], axis=1),
        # Unused prompt inputs still feed the graph with weight zero.
        helper.make_node("ReduceMean", ["image_embeddings"], ["e"], keepdims=0),
        helper.make_node("ReduceMean", ["point_labels"], ["l"], keepdims=0),
        helper.make_node("ReduceMean", ["mask_input"], ["mi"], keepdims=0),
        helper.make_node("ReduceMean", ["has_mask_input"], ["hm"], keepdims=0),
        helper.make_node("Sum", ["e", "l", "mi", "hm"], ["extra"]),
        helper.make_node("Mul", ["extra", "zero"], ["extra0"]),
        const("iou", np.array([[0.9, 0.3]], np.float32)),
        helper.make_node("Add", ["iou", "extra0"], ["iou_predictions"]),
    ]
    f = TensorProto.FLOAT
    dec = helper.make_graph(
        nodes,
        "sam_decoder",
        [
            helper.make_tensor_value_info("image_embeddings", f, [1, 3, 64, 64]),
            helper.make_tensor_value_info("point_coords", f, [1, 2, 2]),
            helper.make_tensor_value_info("point_labels", f, [1, 2]),
            helper.make_tensor_value_info("mask_input", f, [1, 1, 256, 256]),
            helper.make_tensor_value_info("has_mask_input", f, [1]),
            helper.make_tensor_value_info("orig_im_size", f, [2]),
        ],
        [
            helper.make_tensor_value_info("masks", f, [1, 2, "h", "w"]),
            helper.make_tensor_value_info("iou_predictions", f, [1, 2]),
        ],
    )
    save(dec, "sam_decoder.onnx")


if __name__ == "__main__":
    recognizer()
    detector()
    sam()
