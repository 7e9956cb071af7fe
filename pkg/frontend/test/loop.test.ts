// Secondary acceptance: a scripted interaction loop performs ten action steps
// against the fake service, renders every streamed frame in order, and the
// pad lock keeps a mid-loop double click from dispatching twice.
import { describe, expect, it } from 'vitest';
import { attachStream, StudioClient } from '../src/client';
import { ActionPad, buttonAction, sliderAction } from '../src/actionPad';
import { renderFrame, type RenderedScene } from '../src/renderFrame';
import { ViewState } from '../src/viewState';
import { FakeService, settle } from './fakeService';

describe('interaction_loop', () => {
  it('runs ten steps, renders frames in order, and locks out duplicates', async () => {
    const fake = new FakeService();
    const client = new StudioClient('http://fake', fake.fetch);
    const doc = await client.createSession({
      material: { model: 'neo_hookean', mu: 1.0, lambda: 10.0 },
      regime: 'quasistatic',
      graph: { nodes: [[0, 0, 0]], beams: [] },
    });
    const view = new ViewState();
    const scenes: RenderedScene[] = [];
    const sock = fake.openSocket(doc.id, {});
    attachStream(sock, {
      onHello: (msg) => view.applyHello(msg),
      onFrame: (msg) => {
        const scene = renderFrame(msg, view);
        if (scene) scenes.push(scene);
      },
    });
    await settle();

    const pad = new ActionPad(client, doc.id);
    const script = [
      buttonAction(0, 1), buttonAction(0, 1), sliderAction(1, 0.5),
      buttonAction(2, -1), buttonAction(3, 1), buttonAction(0, -1),
      sliderAction(1, -0.5), buttonAction(2, 1), buttonAction(3, -1),
      buttonAction(0, 1),
    ];
    const results: string[] = [];
    for (const [i, action] of script.entries()) {
      if (i === 4) {
        // A double click mid-loop: the pad lock must reject the second press.
        const pair = await Promise.all([pad.dispatch(action), pad.dispatch(action)]);
        results.push(...pair);
      } else {
        results.push(await pad.dispatch(action));
      }
    }
    await settle();

    expect(results.filter((r) => r === 'ok').length).toBe(10);
    expect(results.filter((r) => r === 'rejected').length).toBe(1);
    expect(fake.stepRequests.length).toBe(10);
    expect(fake.stepRequests.map((r) => r.action)).toEqual(script);
    expect(pad.enabled).toBe(true);

    // Rest frame plus one frame per accepted step, rendered in stream order.
    expect(scenes.map((s) => s.step)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    for (let axis = 0; axis < 4; axis++) {
      expect(view.plots.workVsStep[axis].length).toBe(11);
      expect(view.plots.forceDisp[axis].length).toBe(11);
    }

    // The session's cumulative action reflects exactly the scripted program.
    const cum = [0, 0, 0, 0];
    for (const a of script) for (let k = 0; k < 4; k++) cum[k] += a[k];
    const last = await client.getFrame(doc.id, 10);
    expect(last.cum_action).toEqual(cum);
  });

  it('a lone stale frame re-delivery is dropped instead of rendered twice', async () => {
    const fake = new FakeService();
    const client = new StudioClient('http://fake', fake.fetch);
    const doc = await client.createSession({
      material: { model: 'neo_hookean', mu: 1.0, lambda: 10.0 },
      regime: 'quasistatic',
      graph: { nodes: [[0, 0, 0]], beams: [] },
    });
    const view = new ViewState();
    const scenes: RenderedScene[] = [];
    const sock = fake.openSocket(doc.id, {});
    attachStream(sock, {
      onHello: (msg) => view.applyHello(msg),
      onFrame: (msg) => {
        const scene = renderFrame(msg, view);
        if (scene) scenes.push(scene);
      },
    });
    await settle();
    const pad = new ActionPad(client, doc.id);
    await pad.dispatch(buttonAction(0, 1));
    await settle();
    const session = fake.sessions.get(doc.id)!;
    sock.push(session.frames[0]);
    sock.push(session.frames[1]);
    expect(scenes.map((s) => s.step)).toEqual([0, 1]);
  });
});
